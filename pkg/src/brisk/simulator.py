"""Monte Carlo estimation of the simultaneous ruin probability.

psi_T(au) = P(exists t in [0, T]: W(t) - eta t > a u componentwise), scored on
the grid t_k = k / n_steps.  All estimators share one counter-based path
family per master seed: estimates for different levels, windows or grid
resolutions come from literally the same paths, so the monotonicity and
sandwich relations hold path by path.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import HorizonTooLarge, InvalidScenario, ScheduleInvalid
from .gaussian import CovarianceModel
from .paths import LOG_TOL, MAX_LEVELS, PRUNE_TOL, ruin_scan, split_steps
from .results import EstimateWithCI
from .rng import CHUNK, TAG_PATH, map_chunks, philox_key
from .trend import PointMass, TrendDistribution, trend_rows

SCAN_BLOCK = 64 * CHUNK
MIN_STEPS = 64
MIN_PATHS = 100


@dataclass(frozen=True, eq=False)
class RuinScenario:
    model: CovarianceModel
    barrier: np.ndarray
    trend: TrendDistribution = None
    horizon: float = 1.0
    level: float = 1.0
    n_steps: int = 1024
    n_paths: int = 10_000
    master_seed: int = 0

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.barrier, dtype=float))
        if b.shape != (self.model.dim,):
            raise InvalidScenario(f"barrier has length {b.size}, model has dim {self.model.dim}")
        if not np.all(np.isfinite(b)) or not np.any(b > 0):
            raise InvalidScenario("barrier must be finite with a strictly positive component")
        b.setflags(write=False)
        object.__setattr__(self, "barrier", b)
        trend = PointMass(np.zeros(self.model.dim)) if self.trend is None else self.trend
        if trend.dim != self.model.dim:
            raise InvalidScenario("trend dimension does not match the model")
        object.__setattr__(self, "trend", trend)
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidScenario("horizon must be positive")
        if not (math.isfinite(self.level) and self.level > 0):
            raise InvalidScenario("level u must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < MIN_STEPS:
            raise InvalidScenario(f"n_steps must be an integer >= {MIN_STEPS}")
        if int(self.n_paths) != self.n_paths or self.n_paths < MIN_PATHS:
            raise InvalidScenario(f"n_paths must be an integer >= {MIN_PATHS}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidScenario("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def replace(self, **kw) -> "RuinScenario":
        return dataclasses.replace(self, **kw)

    @property
    def total_steps(self) -> int:
        n = round(self.n_steps * self.horizon)
        if n < 1 or abs(n - self.n_steps * self.horizon) > 1e-9 * n:
            raise InvalidScenario("n_steps * horizon must be a positive integer")
        return n


@dataclass
class ScanResult:
    """Raw counts of one shared-path scan."""

    hist: np.ndarray          # (windows, K + 2) first-crossing level counts
    patterns: np.ndarray      # (2 ** windows,) joint crossing-pattern counts
    n_paths: int
    levels: int
    slack: float              # sum of skipped-segment crossing bounds
    meta: dict = field(default_factory=dict)

    def hits(self, window: int, upto: int | None = None) -> int:
        k = self.levels if upto is None else upto
        return int(self.hist[window, :k + 1].sum())

    def estimate(self, window: int, seed, meta: str, upto: int | None = None) -> EstimateWithCI:
        est = EstimateWithCI.from_counts(self.hits(window, upto), self.n_paths, seed, meta)
        est.extra.update(self.meta)
        est.extra["prune_bias_bound"] = self.slack / self.n_paths
        return est


def _fast_threshold(model, barrier, eta, horizon, m):
    """Uniform threshold below which the first normal alone certifies that
    component 0 stays under its barrier (pruning bound on the single base
    segment).  Negative when the shortcut does not apply."""
    if m != 1 or eta.shape[0] != 1 or barrier[0] <= 0:
        return -1.0
    s00 = model.sigma[0, 0]
    cstar = LOG_TOL * s00 * horizon / (2.0 * barrier[0])
    z = (barrier[0] + eta[0, 0] * horizon - cstar) / (math.sqrt(horizon) * model.chol[0, 0])
    return float(ndtr(z))


def _tilt_direction(model, barrier):
    from .qp import solve_qp

    try:
        lam = solve_qp(model, barrier).lam
    except Exception:  # only a pruning aid; fall back to componentwise bounds
        return np.zeros(model.dim), 0.0
    w = lam / lam.sum()
    return w, float(w @ model.sigma @ w)


def scan(scenario: RuinScenario, windows, levels: int | None = None, prune: bool = True) -> ScanResult:
    """Run the shared-path engine over the scenario's paths.

    ``windows`` are closed time intervals; ``levels`` is the number of dyadic
    refinement levels (default: the scenario's grid).  Coarser grids of the
    same odd base are read off the level histogram.
    """
    sc = scenario
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    m, k_grid = split_steps(sc.total_steps)
    K = k_grid if levels is None else int(levels)
    if K > MAX_LEVELS:
        raise InvalidScenario(f"grid too fine: at most {MAX_LEVELS} dyadic levels per base step")
    b = np.ascontiguousarray(sc.barrier * sc.level)
    chol = np.ascontiguousarray(sc.model.chol)
    sig_diag = np.ascontiguousarray(np.diag(sc.model.sigma))
    k0, k1 = philox_key(sc.master_seed, TAG_PATH)
    log_tol = LOG_TOL if prune else math.inf
    const_eta = sc.trend.is_constant
    eta_const = np.ascontiguousarray(sc.trend.bounds[0][None, :])
    fast = _fast_threshold(sc.model, b, eta_const, sc.horizon, m) if (const_eta and prune) else -1.0
    wdir, wvar = _tilt_direction(sc.model, b) if prune else (np.zeros(sc.model.dim), 0.0)
    nw = windows.shape[0]

    def block(start):
        size = min(SCAN_BLOCK, sc.n_paths - start)
        eta = eta_const if const_eta else trend_rows(sc.trend, sc.master_seed, start, size)
        hist = np.zeros((nw, K + 2), np.int64)
        pat = np.zeros(1 << nw, np.int64)
        slack = np.zeros(1)
        ruin_scan(start, size, k0, k1, chol, sig_diag, m, K, sc.horizon, np.ascontiguousarray(eta), b,
                  windows, log_tol, fast, wdir, wvar, hist, pat, slack)
        return hist, pat, slack[0]

    parts = map_chunks(block, range(0, sc.n_paths, SCAN_BLOCK))
    hist = sum(p[0] for p in parts)
    pat = sum(p[1] for p in parts)
    slack = float(sum(p[2] for p in parts))
    meta = {"n_steps": sc.n_steps, "base_steps": m, "levels": K, "prune_tol": PRUNE_TOL if prune else 0.0}
    return ScanResult(hist, pat, sc.n_paths, K, slack, meta)


def simulate_ruin(scenario: RuinScenario, prune: bool = True) -> EstimateWithCI:
    """Fraction of paths with a simultaneous grid crossing on [0, T]."""
    res = scan(scenario, [[0.0, scenario.horizon]], prune=prune)
    return res.estimate(0, scenario.master_seed, "grid-mc")


def level_sweep(scenario: RuinScenario, levels) -> list[EstimateWithCI]:
    """simulate_ruin at several levels u on the same paths."""
    return [simulate_ruin(scenario.replace(level=float(u))) for u in levels]


@dataclass(frozen=True)
class SplitEstimate:
    m: EstimateWithCI
    M: EstimateWithCI
    psi: EstimateWithCI
    delta: float
    patterns: dict

    def __iter__(self):
        # unpacks as (m_est, M_est)
        return iter((self.m, self.M))

    def sandwich_holds(self) -> bool:
        """Path-wise m <= psi <= m + M, read off the joint crossing patterns."""
        for mask, count in self.patterns.items():
            psi, early, late = (mask >> 0) & 1, (mask >> 1) & 1, (mask >> 2) & 1
            if count and (early > psi or psi > early + late):
                return False
        return True


def simulate_split(scenario: RuinScenario, lambda_horizon: float) -> SplitEstimate:
    """Ruin restricted to [0, delta] (m) and [delta, 1] (M), delta = 1 - Lambda/u^2,
    both closed, scored on the same paths as the full-interval estimate."""
    if scenario.horizon != 1.0:
        raise InvalidScenario("the m/M split is defined for horizon T = 1")
    u = scenario.level
    if not lambda_horizon >= 0:
        raise ValueError("Lambda must be nonnegative")
    if lambda_horizon >= u * u:
        raise HorizonTooLarge(f"Lambda={lambda_horizon} must be < u^2={u * u}")
    delta = 1.0 - lambda_horizon / (u * u)
    res = scan(scenario, [[0.0, 1.0], [0.0, delta], [delta, 1.0]])
    seed = scenario.master_seed
    patterns = {int(k): int(v) for k, v in enumerate(res.patterns)}
    return SplitEstimate(res.estimate(1, seed, "grid-mc[0,delta]"), res.estimate(2, seed, "grid-mc[delta,1]"),
                         res.estimate(0, seed, "grid-mc"), delta, patterns)


def convergence_sweep(scenario: RuinScenario, step_schedule) -> list[tuple[int, float, float]]:
    """(n_steps, estimate, stderr) rows from one refinement-consistent scan.

    Every schedule entry must share the odd part of the finest grid so that
    each coarser grid is an exact subset of the finer ones.
    """
    sched = [int(s) for s in step_schedule]
    if len(sched) < 3:
        raise ScheduleInvalid("schedule needs at least 3 entries")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ScheduleInvalid("schedule must be strictly increasing")
    if any(s < MIN_STEPS for s in sched):
        raise ScheduleInvalid(f"every entry must be >= {MIN_STEPS}")
    totals = []
    for s in sched:
        tot = s * scenario.horizon
        if abs(tot - round(tot)) > 1e-9 * tot:
            raise ScheduleInvalid("n_steps * horizon must be an integer for every entry")
        totals.append(split_steps(int(round(tot))))
    if len({m for m, _ in totals}) != 1:
        raise ScheduleInvalid("entries must differ by powers of two (nested grids)")
    finest = scenario.replace(n_steps=sched[-1])
    res = scan(finest, [[0.0, scenario.horizon]])
    rows = []
    for s, (_, k) in zip(sched, totals):
        est = res.estimate(0, scenario.master_seed, "grid-mc", upto=k)
        rows.append((s, est.point, est.stderr))
    return rows
