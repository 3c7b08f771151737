"""Closed-form and semi-closed-form ruin asymptotics.

For the simultaneous ruin probability of W(t) - eta t over a level a u,

    psi_1(au) ~ (prod_{i in I} lambda_i) I_a E_eta P(W(1) > a u + eta),

where (a_tilde, I, lambda) solve the barrier QP and

    I_a = int P(exists t >= 0: W_I(t) - a_I t > x) exp(<lambda_I, x>) dx.

I_a(Lambda) (time restricted to [0, Lambda]) is estimated per path: the set
of ruined x is the union of lower orthants below the path's Pareto frontier,
so the inner integral is exact given the discretized path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr

from .errors import (BudgetTooSmall, DegenerateBound, DimensionMismatch, DimensionTooLarge, DomainError,
                     NonPositiveLambda, PartialIndexSet)
from .gaussian import (TAIL_CHUNK, CovarianceModel, _choose_strategy, from_covariance, log_density,
                       tail_probability, tail_probability_mixture, tilt_point)
from .paths import LOG_TOL, frontier_integral, frontier_scan, grid_hit_weight, pareto_filter, split_steps
from .qp import QpSolution, solve_qp
from .results import EstimateWithCI
from .rng import CHUNK, TAG_ETA_TAIL, TAG_IA, TAG_TAIL, child_generator, chunk_ranges, map_chunks, philox_key
from .trend import TrendDistribution, trend_rows

IA_REL_TOL = 1e-10           # negligible-weight threshold for frontier pruning
EXTEND_REL = 0.005           # horizon doubling stops below this relative increment
MAX_HORIZON = 640.0
QUAD_CAP = 10**9
QUAD_TRUNC = 1e-6
QUAD_NODES = 1 << 16       # default node count per path
DEGENERATE_P = 1e-12


def exact_ruin_1d(u: float, c: float, sigma: float, T: float) -> float:
    """P(sup_{t <= T} sigma B(t) - c t > u) for one-dimensional Brownian motion."""
    if not sigma > 0 or not T > 0 or not u >= 0:
        raise DomainError("need sigma > 0, T > 0 and u >= 0")
    s = sigma * math.sqrt(T)
    first = float(ndtr(-u / s - c * math.sqrt(T) / sigma))
    log_second = -2.0 * c * u / sigma**2 + float(log_ndtr(-u / s + c * math.sqrt(T) / sigma))
    return min(1.0, first + math.exp(log_second))


def frontier_exp_integral(points, lam) -> float:
    """Integral of exp(<lam, x>) over the union of orthants {x < v}, v in points."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if lam.size == 1 else pts.reshape(1, -1)
    if lam.size > 3:
        raise DimensionTooLarge("exact frontier integration supports d <= 3")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise NonPositiveLambda("every lambda_i must be positive")
    if pts.shape[0] == 0 or pts.shape[1] != lam.size:
        raise DimensionMismatch("points must be a nonempty (n, d) array matching lambda")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return float(frontier_integral(pareto_filter(np.ascontiguousarray(pts)), lam))


def _active_parts(qp: QpSolution, model: CovarianceModel):
    idx = list(qp.active_set)
    sub = model.submodel(idx)
    return sub, qp.barrier[idx].copy(), qp.lam[idx].copy()


def _check_ia_budget(n_steps, n_paths):
    if n_steps < 256:
        raise ValueError("n_steps must be >= 256 per unit time")
    if n_paths < 1000:
        raise BudgetTooSmall("need at least 1000 paths")


def _grid(horizon, n_steps):
    mu, K = split_steps(int(n_steps))
    nbase = int(math.ceil(horizon * mu - 1e-9))
    return mu, K, nbase


def _scan_frontiers(sub, drift, lam, horizon, n_steps, n_paths, seed, keep):
    """Run the frontier engine chunk-wise; yields per-chunk (values, points, offsets)."""
    mu, K, nbase = _grid(horizon, n_steps)
    k0, k1 = philox_key(seed, TAG_IA)
    chol = np.ascontiguousarray(sub.chol)
    sd = np.ascontiguousarray(np.diag(sub.sigma))

    def chunk(spec):
        _, start, size = spec
        vals = np.zeros(size)
        offsets = np.zeros(size + 1, np.int64)
        cap = size * 32 if keep else 1
        while True:
            pts = np.zeros((cap, lam.size))
            frontier_scan(start, size, k0, k1, chol, sd, drift, lam, nbase, 1.0 / mu, K, LOG_TOL,
                          math.log(IA_REL_TOL), vals, keep, pts, offsets)
            if not keep or offsets[-1] <= cap:
                return vals, pts, offsets
            cap = int(offsets[-1])

    parts = map_chunks(chunk, chunk_ranges(n_paths, CHUNK))
    return parts, {"horizon_used": nbase / mu, "n_steps": int(n_steps), "base_steps_per_unit": mu,
                   "levels": K, "prune_tol": math.exp(-LOG_TOL), "weight_tol": IA_REL_TOL}


def estimate_ia(qp: QpSolution, model: CovarianceModel, horizon: float, n_steps: int = 4096,
                n_paths: int = 10_000, seed=0) -> EstimateWithCI:
    """Monte Carlo estimate of I_a(Lambda) with exact per-path x-integration.

    Paths are addressed by (seed, path id, node), so a larger horizon extends
    the very same paths and the estimate is monotone in Lambda up to pruning
    tolerance.
    """
    if len(qp.active_set) > 3:
        raise DimensionTooLarge("|I| > 3: use estimate_ia_quadrature")
    if not horizon >= 0:
        raise ValueError("horizon must be >= 0")
    sub, drift, lam = _active_parts(qp, model)
    if horizon == 0:
        return EstimateWithCI(float(1.0 / np.prod(lam)), 0.0, 1, seed, "ia-exact", {"horizon_used": 0.0})
    _check_ia_budget(n_steps, n_paths)
    parts, meta = _scan_frontiers(sub, drift, lam, horizon, n_steps, n_paths, seed, keep=False)
    vals = np.concatenate([p[0] for p in parts])
    return EstimateWithCI.from_moments(float(vals.sum()), float(vals @ vals), n_paths, seed, "ia-frontier", **meta)


def estimate_ia_extended(qp: QpSolution, model: CovarianceModel, horizon: float = 20.0, n_steps: int = 4096,
                         n_paths: int = 10_000, seed=0, rel_tol: float = EXTEND_REL,
                         max_horizon: float = MAX_HORIZON) -> EstimateWithCI:
    """Double Lambda until the relative increment of I_a(Lambda) drops below
    ``rel_tol``; the doubling history is kept in ``extra["extension"]``."""
    est = estimate_ia(qp, model, horizon, n_steps, n_paths, seed)
    history = [(horizon, est.point, est.stderr)]
    while horizon * 2 <= max_horizon:
        nxt = estimate_ia(qp, model, horizon * 2, n_steps, n_paths, seed)
        history.append((horizon * 2, nxt.point, nxt.stderr))
        done = abs(nxt.point - est.point) < rel_tol * abs(nxt.point)
        est, horizon = nxt, horizon * 2
        if done:
            break
    est.extra["extension"] = history
    est.extra["converged"] = len(history) >= 2 and abs(history[-1][1] - history[-2][1]) < rel_tol * abs(history[-1][1])
    return est


def _integrand_rate(drift, lam, sig_diag):
    # bound on P(v > x 1) e^{<lam, x 1>}: min of the projected and componentwise
    # crossing bounds, exp(-2 <lam, x>) and exp(-2 a_i x_i / s_ii)
    slam = lam.sum()
    rate = slam
    for a_i, s_i in zip(drift, sig_diag):
        if a_i > 0:
            rate = max(rate, 2.0 * a_i / s_i - slam)
    return rate


def estimate_ia_quadrature(qp: QpSolution, model: CovarianceModel, horizon: float, box=None,
                           grid: int | None = None, inner_paths: int = 2000, seed=0, n_steps: int = 4096,
                           cap: int = QUAD_CAP) -> EstimateWithCI:
    """Tensor-grid quadrature of I_a(Lambda) in y_i = exp(lambda_i x_i).

    The axis grid is uniform in x on ``box = (x_lo, x_hi)``; cell weights are
    exact in y (the first cell reaches down to y = 0) and the integrand is
    evaluated at the cell midpoint in y.  The ruin probability at every node
    is estimated on one shared set of paths.  The reported error combines the
    Monte Carlo standard error with a Richardson estimate from a
    half-resolution grid.
    """
    sub, drift, lam = _active_parts(qp, model)
    k = lam.size
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    if n_steps < 256:
        raise ValueError("n_steps must be >= 256 per unit time")
    if inner_paths < 2:
        raise BudgetTooSmall("need at least 2 inner paths")
    if grid is None:
        grid = int(max(4, min(256, math.floor(QUAD_NODES ** (1.0 / k) + 1e-9),
                              math.floor((cap / inner_paths) ** (1.0 / k) + 1e-9))))
    if grid < 4:
        raise ValueError("grid must be >= 4")
    if float(grid) ** k * inner_paths > cap:
        raise BudgetTooSmall(f"grid^|I| * inner_paths = {float(grid) ** k * inner_paths:.3g} exceeds cap {cap:.3g}")
    sig_diag = np.diag(sub.sigma)
    prod_lam = float(np.prod(lam))
    rate = _integrand_rate(drift, lam, sig_diag)
    if box is None:
        x_lo = -12.0 / lam.min()
        x_hi = max(math.log(prod_lam / QUAD_TRUNC) / rate, 1.0 / lam.min()) if prod_lam > QUAD_TRUNC \
            else 1.0 / lam.min()
    else:
        x_lo, x_hi = map(float, box)
    if not x_lo < 0 < x_hi:
        raise ValueError("quadrature box must satisfy x_lo < 0 < x_hi")

    def axes(g):
        edges = np.linspace(x_lo, x_hi, g + 1)
        y = np.exp(np.outer(edges, lam))
        y[0] = 0.0
        w = np.diff(y, axis=0) / lam
        mid = np.log(0.5 * (y[1:] + y[:-1])) / lam
        return np.ascontiguousarray(mid), np.ascontiguousarray(w)

    fine, coarse = axes(grid), axes(max(2, grid // 2))
    parts, meta = _scan_frontiers(sub, drift, lam, horizon, n_steps, inner_paths, seed, keep=True)
    q_fine, q_coarse = [], []
    for _, pts, offsets in parts:
        for p in range(len(offsets) - 1):
            front = np.ascontiguousarray(pts[offsets[p]:offsets[p + 1]])
            counts = np.zeros((front.shape[0], k), np.int64)
            idx = np.zeros(k, np.int64)
            q_fine.append(grid_hit_weight(front, fine[0], fine[1], counts, idx))
            q_coarse.append(grid_hit_weight(front, coarse[0], coarse[1], counts, idx))
    q_fine, q_coarse = np.array(q_fine), np.array(q_coarse)
    n = len(q_fine)
    point = float(q_fine.mean())
    se_mc = float(q_fine.std(ddof=1) / math.sqrt(n))
    # midpoint rule is second order: Richardson estimate of the fine-grid error
    quad_err = abs(point - float(q_coarse.mean())) / 3.0
    trunc = math.exp(-rate * x_hi) / max(point, 1e-300)
    meta.update({"grid": grid, "box": (x_lo, x_hi), "mc_stderr": se_mc, "quadrature_error": quad_err,
                 "truncation_at_x_hi": trunc})
    return EstimateWithCI(point, math.hypot(se_mc, quad_err), n, seed, "ia-quadrature", meta)


def tail_term(model: CovarianceModel, a, u: float, trend: TrendDistribution, budget: int = 100_000,
              seed=0, method: str = "auto") -> EstimateWithCI:
    """E_eta P(W(1) > a u + eta).

    Finitely supported laws are summed exactly over their atoms (common
    random numbers across atoms).  Other laws are integrated by joint Monte
    Carlo: every W(1) draw is paired with its own eta draw, so the standard
    error covers both sources of noise.
    """
    a = np.asarray(a, dtype=float)
    atoms = trend.atoms()
    if atoms is not None:
        values, probs = atoms
        if len(probs) == 1:
            est = tail_probability(model, a * u + values[0], budget, seed, method)
        else:
            est = tail_probability_mixture(model, a * u + values, probs, budget, seed, method)
        est.extra["eta"] = "atoms"
        return est
    return _joint_eta_tail(model, a * u, trend, budget, seed, method)


def _joint_eta_tail(model, base, trend, budget, seed, method):
    if budget < 1000:
        raise ValueError("tail budget must be >= 1000")
    lo = trend.bounds[0]
    b_ref = base + lo
    method = _choose_strategy(model, b_ref, method)
    shift = tilt_point(model, b_ref) if method == "tilted" else np.zeros(model.dim)
    white = linalg.solve_triangular(model.chol, shift, lower=True)
    half_q = 0.5 * float(white @ white)

    def chunk(spec):
        c, start, size = spec
        z = child_generator(seed, TAG_TAIL, c).standard_normal((size, model.dim))
        x = shift + z @ model.chol.T
        eta = trend_rows(trend, seed, start, size, tag=TAG_ETA_TAIL)
        s = np.all(x > base + eta, axis=1) * np.exp(-(z @ white) - half_q)
        return float(s.sum()), float(s @ s)

    parts = map_chunks(chunk, chunk_ranges(budget, TAIL_CHUNK))
    est = EstimateWithCI.from_moments(sum(p[0] for p in parts), sum(p[1] for p in parts), budget, seed,
                                      method, shift=shift.tolist())
    est.extra["eta"] = "joint-mc"
    return est


@dataclass(frozen=True)
class AsymptoticBudgets:
    ia_paths: int = 10_000
    ia_steps: int = 4096
    tail_budget: int = 100_000
    extend: bool = True
    quad_grid: int | None = None
    quad_paths: int = 2000


@dataclass(frozen=True)
class AsymptoticResult:
    qp: QpSolution
    ia_estimate: EstimateWithCI
    lambda_product: float
    tail_term: EstimateWithCI
    psi_approx: EstimateWithCI
    lambda_horizon: float
    u: float
    meta: dict = field(default_factory=dict, compare=False)


def compute_ia(qp, model, horizon, budgets: AsymptoticBudgets, seed) -> EstimateWithCI:
    """I_a by the exact frontier method (|I| <= 3) or tensor quadrature."""
    if len(qp.active_set) <= 3:
        if budgets.extend:
            return estimate_ia_extended(qp, model, horizon, budgets.ia_steps, budgets.ia_paths, seed)
        return estimate_ia(qp, model, horizon, budgets.ia_steps, budgets.ia_paths, seed)
    return estimate_ia_quadrature(qp, model, horizon, grid=budgets.quad_grid, inner_paths=budgets.quad_paths,
                                  seed=seed, n_steps=budgets.ia_steps)


def rescaled(model: CovarianceModel, barrier, trend: TrendDistribution, T: float):
    """(a / sqrt(T), eta sqrt(T)): by self-similarity psi_T(au) equals psi_1 for these."""
    s = math.sqrt(T)
    return np.asarray(barrier, dtype=float) / s, (trend if T == 1.0 else trend.scaled(s))


def asymptotic_psi(scenario, horizon: float = 20.0, budgets: AsymptoticBudgets | None = None, seed=None,
                   ia: EstimateWithCI | None = None) -> AsymptoticResult:
    """(prod lambda_I) I_a E_eta P(W(1) > a u + eta) for the scenario's level.

    A precomputed I_a (it does not depend on u or on the trend) may be
    passed in as ``ia``.
    """
    budgets = budgets or AsymptoticBudgets()
    seed = scenario.master_seed if seed is None else seed
    a, trend = rescaled(scenario.model, scenario.barrier, scenario.trend, scenario.horizon)
    qp = solve_qp(scenario.model, a)
    if ia is None:
        ia = compute_ia(qp, scenario.model, horizon, budgets, seed)
    tail = tail_term(scenario.model, a, scenario.level, trend, budgets.tail_budget, seed)
    lp = qp.lambda_product
    point = lp * ia.point * tail.point
    rel = math.hypot(ia.rel_stderr() if ia.point else 0.0, tail.rel_stderr() if tail.point else 0.0)
    psi = EstimateWithCI(point, abs(point) * rel, tail.n, seed, "asymptotic")
    meta = {"rescale": math.sqrt(scenario.horizon), "barrier_rescaled": a.tolist(), "horizon_T": scenario.horizon}
    return AsymptoticResult(qp, ia, lp, tail, psi, float(ia.extra.get("horizon_used", horizon)), scenario.level, meta)


def uniform_tail_expansion(model: CovarianceModel, qp: QpSolution, u: float, c, budget: int = 100_000,
                           seed=0) -> float:
    """Leading-order expansion of P(W(1) > a u + c):

    u^{-|I|} phi_Sigma(a_tilde u + c) / prod(lambda_I) times
    int 1{x_U <= 0} exp(<c_tilde_J, x_J> - x_J^T P x_J / 2) dx_J,
    P = (Sigma^-1)_JJ and c_tilde = Sigma^-1 c.  The Gaussian integral is
    done by completing the square; its orthant factor is exact for |U| <= 1
    and estimated by ``tail_probability`` otherwise.
    """
    if not u > 0:
        raise DomainError("u must be positive")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (model.dim,):
        raise DimensionMismatch("c has the wrong length")
    lam_i = qp.lambda_active
    log_val = -len(qp.active_set) * math.log(u) + log_density(model, qp.a_tilde * u + c) - float(np.sum(np.log(lam_i)))
    return math.exp(log_val + _log_j_integral(model, qp, c, budget, seed))


def _log_j_integral(model, qp, c, budget, seed) -> float:
    J = list(qp.complement)
    if not J:
        return 0.0
    c_t = (model.sigma_inv @ c)[J]
    P = model.sigma_inv[np.ix_(J, J)]
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    mu = cov @ c_t
    log_gauss = 0.5 * float(c_t @ mu) + 0.5 * len(J) * math.log(2 * math.pi) - 0.5 * float(np.linalg.slogdet(P)[1])
    U = [J.index(i) for i in qp.weak_set]
    if not U:
        return log_gauss
    # P(X_U <= 0) for X ~ N(mu, cov), i.e. P(Z_U > mu_U) for centred Z
    if len(U) == 1:
        orth = float(ndtr(-mu[U[0]] / math.sqrt(cov[U[0], U[0]])))
    else:
        sub = from_covariance(cov[np.ix_(U, U)])
        orth = tail_probability(sub, mu[U], budget, seed).point
    return log_gauss + math.log(orth)


def upper_bound_constant(model: CovarianceModel, trend: TrendDistribution, T: float, budget: int = 100_000,
                         seed=0) -> EstimateWithCI:
    """C = 1 / P(W(T) > max(K2 T, 0)); the value for the raw barrier K2 T is kept
    in ``extra`` for comparison."""
    if not T > 0:
        raise DomainError("T must be positive")
    k2 = np.asarray(trend.bounds[1], dtype=float)
    if k2.shape != (model.dim,):
        raise DimensionMismatch("trend dimension does not match the model")
    s = math.sqrt(T)
    # W(T) = sqrt(T) W(1): P(W(T) > b) = P(W(1) > b / sqrt(T))
    p_max = tail_probability(model, np.maximum(k2 * T, 0.0) / s, budget, seed)
    p_raw = tail_probability(model, k2 * T / s, budget, seed)
    if p_max.point < DEGENERATE_P:
        raise DegenerateBound(f"P(W(T) > max(K2 T, 0)) = {p_max.point:.3g} is below {DEGENERATE_P:g}")
    c = 1.0 / p_max.point
    extra = {"p_max_form": p_max.point, "p_max_form_stderr": p_max.stderr, "p_raw_form": p_raw.point,
             "p_raw_form_stderr": p_raw.stderr,
             "c_raw_form": 1.0 / p_raw.point if p_raw.point > 0 else math.inf}
    return EstimateWithCI(c, p_max.stderr * c * c, p_max.n, seed, "inverse-" + p_max.meta, extra)


def bernoulli_asymptotic_factor(p) -> float:
    """prod (1 - p_k): the zero-trend atom carries the asymptotics."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.prod(1.0 - p))


def uniform_trend_asymptotic(qp: QpSolution, u: float) -> float:
    """u^{-d} / prod(lambda): E_eta P(W(1) > au + eta) ~ this factor times
    P(W(1) > au) for eta uniform on [0, 1]^d."""
    if len(qp.active_set) < qp.dim:
        raise PartialIndexSet("uniform-trend simplification needs I = {1, ..., d}")
    if not u > 0:
        raise DomainError("u must be positive")
    return float(u ** (-qp.dim) / qp.lambda_product)
