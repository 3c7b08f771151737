"""Simultaneous ruin asymptotics for multivariate Brownian risk models."""

__version__ = "0.1.0"
