from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with its Monte Carlo standard error.

    ``n`` is the replication count, ``seed`` the master seed that reproduces
    the estimate, ``meta`` a short method descriptor (e.g. ``"tilted"``).
    """

    point: float
    stderr: float
    n: int
    seed: int | None = None
    meta: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0.0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")

    @classmethod
    def from_counts(cls, hits: int, n: int, seed=None, meta="binomial", **extra):
        p = hits / n
        se = float(np.sqrt(max(p * (1.0 - p), 0.0) / n))
        return cls(float(p), se, int(n), seed, meta, dict(extra))

    @classmethod
    def from_moments(cls, s1: float, s2: float, n: int, seed=None, meta="", **extra):
        """Sample mean and standard error from running sums of x and x**2."""
        mean = s1 / n
        var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        return cls(float(mean), float(np.sqrt(var / n)), int(n), seed, meta, dict(extra))

    def rel_stderr(self) -> float:
        return self.stderr / abs(self.point) if self.point else float("inf")

    def as_dict(self) -> dict:
        return {"point": self.point, "stderr": self.stderr, "n": self.n,
                "seed": self.seed, "meta": self.meta}
