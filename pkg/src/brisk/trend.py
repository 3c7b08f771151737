"""Bounded random trend laws for the premium-rate vector eta."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidTrend
from .rng import CHUNK, TAG_TREND, child_generator, map_chunks

MAX_ATOMS = 1024
PROB_ATOL = 1e-12


def _vector(x, name) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise InvalidTrend(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidTrend(f"{name} must be finite")
    v.setflags(write=False)
    return v


class TrendDistribution:
    """Base class.  Subclasses expose ``dim``, ``bounds`` (K1, K2) and draw
    rows through :meth:`draw` from a numpy ``Generator``."""

    kind = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def atoms(self):
        """(values, probs) for finitely supported laws, else None."""
        return None

    @property
    def is_constant(self) -> bool:
        return False

    def scaled(self, s: float) -> "TrendDistribution":
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def as_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PointMass(TrendDistribution):
    c: np.ndarray
    kind = "point_mass"

    def __post_init__(self):
        object.__setattr__(self, "c", _vector(self.c, "c"))

    @property
    def dim(self):
        return self.c.size

    @property
    def bounds(self):
        return self.c, self.c

    @property
    def is_constant(self):
        return True

    def atoms(self):
        return self.c[None, :], np.ones(1)

    def scaled(self, s):
        return PointMass(self.c * s)

    def draw(self, rng, n):
        return np.broadcast_to(self.c, (n, self.dim)).copy()

    def as_dict(self):
        return {"kind": self.kind, "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class Bernoulli(TrendDistribution):
    """Independent components with P(eta_i = scale_i) = p_i, else 0."""

    p: np.ndarray
    scale: np.ndarray | None = None
    kind = "bernoulli"

    def __post_init__(self):
        p = _vector(self.p, "p")
        if np.any(p < 0) or np.any(p > 1):
            raise InvalidTrend("Bernoulli probabilities must lie in [0, 1]")
        scale = np.ones(p.size) if self.scale is None else self.scale
        scale = _vector(scale, "scale")
        if scale.shape != p.shape:
            raise DimensionMismatch("scale must match p")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self):
        return self.p.size

    @property
    def bounds(self):
        return np.minimum(self.scale, 0.0), np.maximum(self.scale, 0.0)

    def atoms(self):
        if 2 ** self.dim > MAX_ATOMS:
            return None
        bits = np.array(list(itertools.product((0.0, 1.0), repeat=self.dim)))
        probs = np.prod(np.where(bits > 0, self.p, 1.0 - self.p), axis=1)
        keep = probs > 0
        return bits[keep] * self.scale, probs[keep]

    def scaled(self, s):
        return Bernoulli(self.p, self.scale * s)

    def draw(self, rng, n):
        return (rng.random((n, self.dim)) < self.p) * self.scale

    def as_dict(self):
        out = {"kind": self.kind, "p": self.p.tolist()}
        if not np.all(self.scale == 1.0):
            out["scale"] = self.scale.tolist()
        return out


@dataclass(frozen=True, eq=False)
class UniformBox(TrendDistribution):
    lo: np.ndarray
    hi: np.ndarray
    kind = "uniform_box"

    def __post_init__(self):
        lo, hi = _vector(self.lo, "lo"), _vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi must have equal length")
        if np.any(lo > hi):
            raise InvalidTrend("need lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    @property
    def bounds(self):
        return self.lo, self.hi

    @property
    def is_constant(self):
        return bool(np.all(self.lo == self.hi))

    def scaled(self, s):
        lo, hi = self.lo * s, self.hi * s
        return UniformBox(np.minimum(lo, hi), np.maximum(lo, hi))

    def draw(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def as_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Discrete(TrendDistribution):
    values: np.ndarray
    probs: np.ndarray
    kind = "discrete"

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if v.shape[0] != p.size or p.size == 0:
            raise InvalidTrend("one probability per atom required")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
            raise InvalidTrend("atoms and probabilities must be finite")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_ATOL:
            raise InvalidTrend("probabilities must be nonnegative and sum to 1")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def bounds(self):
        return self.values.min(axis=0), self.values.max(axis=0)

    @property
    def is_constant(self):
        return self.values.shape[0] == 1

    def atoms(self):
        if self.values.shape[0] > MAX_ATOMS:
            return None
        return self.values, self.probs

    def scaled(self, s):
        return Discrete(self.values * s, self.probs)

    def draw(self, rng, n):
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), len(cdf) - 1)
        return self.values[idx]

    def as_dict(self):
        return {"kind": self.kind,
                "atoms": [{"value": v.tolist(), "prob": float(p)} for v, p in zip(self.values, self.probs)]}


def trend_rows(trend: TrendDistribution, seed, start: int, size: int, tag: int = TAG_TREND) -> np.ndarray:
    """Rows ``start .. start + size - 1`` of the trend stream for ``seed``.

    Row k always comes from chunk k // CHUNK, so any window of rows is
    reproducible on its own.
    """
    if size <= 0:
        return np.empty((0, trend.dim))
    c0, c1 = start // CHUNK, (start + size - 1) // CHUNK
    blocks = map_chunks(lambda c: trend.draw(child_generator(seed, tag, c), CHUNK), range(c0, c1 + 1))
    rows = np.concatenate(blocks)
    off = start - c0 * CHUNK
    return rows[off:off + size]


def sample_trend(trend: TrendDistribution, n: int, seed) -> np.ndarray:
    """n i.i.d. draws from the trend law, on a stream disjoint from the paths."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return trend_rows(trend, seed, 0, n)
