"""The quadratic program  min x^T Sigma^-1 x  subject to  x >= a.

The solution is characterised by a unique index set I with
(Sigma_II)^-1 a_I > 0 and Sigma_JI (Sigma_II)^-1 a_I >= a_J on J = I^c.
``solve_qp`` enumerates candidate sets by increasing size and returns the
first one passing both tests.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DimensionTooLarge, InvalidBarrier, NoFeasibleSet, RhoOutOfRange
from .gaussian import CovarianceModel, equicorrelated_model

TOL = 1e-10
MAX_DIM = 20


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Optimizer of the barrier QP.  Index sets are 0-based, sorted tuples."""

    a_tilde: np.ndarray
    active_set: tuple
    complement: tuple
    weak_set: tuple
    lam: np.ndarray
    objective: float
    barrier: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.a_tilde)

    @property
    def lambda_active(self) -> np.ndarray:
        return self.lam[list(self.active_set)]

    @property
    def lambda_product(self) -> float:
        return float(np.prod(self.lambda_active))

    def scaled(self, s: float) -> "QpSolution":
        return QpSolution(self.a_tilde * s, self.active_set, self.complement, self.weak_set,
                          self.lam * s, self.objective * s * s, self.barrier * s)

    def as_dict(self, one_based: bool = True) -> dict:
        off = 1 if one_based else 0
        return {
            "a_tilde": self.a_tilde.tolist(),
            "I": [i + off for i in self.active_set],
            "J": [i + off for i in self.complement],
            "U": [i + off for i in self.weak_set],
            "lambda": self.lam.tolist(),
            "objective": self.objective,
        }


def _check_barrier(model: CovarianceModel, a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (model.dim,):
        raise DimensionMismatch(f"barrier has length {a.size}, model has dim {model.dim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("barrier must be finite")
    if np.all(a <= 0):
        raise InvalidBarrier("barrier must have at least one strictly positive component")
    return a


def _test_set(sigma, a, idx, tol):
    """Return (lambda_I, a_tilde) if ``idx`` passes both optimality tests."""
    lam_i = np.linalg.solve(sigma[np.ix_(idx, idx)], a[idx])
    if not np.all(lam_i > tol * max(1.0, float(np.max(np.abs(lam_i))))):
        return None
    a_tilde = sigma[:, idx] @ lam_i
    a_tilde[idx] = a[idx]
    jdx = np.setdiff1d(np.arange(len(a)), idx)
    if jdx.size and not np.all(a_tilde[jdx] >= a[jdx] - tol * (1.0 + np.abs(a[jdx]))):
        return None
    return lam_i, a_tilde


def _assemble(a, idx, lam_i, a_tilde, tol) -> QpSolution:
    d = len(a)
    idx = tuple(int(i) for i in idx)
    jdx = tuple(i for i in range(d) if i not in idx)
    lam = np.zeros(d)
    lam[list(idx)] = lam_i
    weak = tuple(j for j in jdx if abs(a_tilde[j] - a[j]) <= tol * (1.0 + abs(a[j])))
    objective = float(a[list(idx)] @ lam_i)
    return QpSolution(a_tilde, idx, jdx, weak, lam, objective, a.copy())


def passing_index_sets(model: CovarianceModel, a, tol: float = TOL) -> list[tuple]:
    """Every nonempty index set passing both optimality tests (for audits)."""
    a = _check_barrier(model, a)
    out = []
    for k in range(1, model.dim + 1):
        for idx in itertools.combinations(range(model.dim), k):
            if _test_set(model.sigma, a, list(idx), tol) is not None:
                out.append(idx)
    return out


def solve_qp(model: CovarianceModel, a, tol: float = TOL) -> QpSolution:
    a = _check_barrier(model, a)
    if model.dim > MAX_DIM:
        raise DimensionTooLarge(f"index-set enumeration limited to d <= {MAX_DIM}")
    for k in range(1, model.dim + 1):
        for idx in itertools.combinations(range(model.dim), k):
            hit = _test_set(model.sigma, a, list(idx), tol)
            if hit is not None:
                return _assemble(a, idx, hit[0], hit[1], tol)
    raise NoFeasibleSet("no index set passed the optimality tests; covariance may be ill-conditioned")


def solve_qp_bruteforce(model: CovarianceModel, a, grid: int = 100, iters: int = 50_000) -> np.ndarray:
    """Grid search on [a, a + 5] followed by accelerated projected gradient.

    Independent of the index-set characterisation; intended as a test oracle.
    """
    a = _check_barrier(model, a)
    if model.dim > 3:
        raise DimensionTooLarge("brute-force oracle supports d <= 3")
    if grid < 100:
        raise ValueError("grid must be >= 100")
    p = model.sigma_inv
    axes = [np.linspace(ai, ai + 5.0, grid) for ai in a]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    vals = np.einsum("ij,jk,ik->i", mesh, p, mesh)
    x = mesh[np.argmin(vals)].copy()

    step = 1.0 / (2.0 * np.linalg.eigvalsh(p)[-1])
    y, t, f_prev = x.copy(), 1.0, x @ p @ x
    for _ in range(iters):
        x_new = np.maximum(y - step * 2.0 * (p @ y), a)
        f_new = x_new @ p @ x_new
        if f_new > f_prev:  # restart momentum
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        if np.max(np.abs(x_new - x)) < 1e-15 * (1.0 + np.max(np.abs(x))):
            x = x_new
            break
        x, t, f_prev = x_new, t_new, f_new
    return x


@dataclass(frozen=True)
class EquicorrSpec:
    """Unit variances, common correlation rho in (-1/(d-1), 1)."""

    dim: int
    rho: float
    barrier: tuple

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("equicorrelated model needs dim >= 2")
        if not -1.0 / (self.dim - 1) < self.rho < 1.0:
            raise RhoOutOfRange(f"rho={self.rho} outside (-1/(d-1), 1) for d={self.dim}")
        b = tuple(float(x) for x in np.atleast_1d(self.barrier))
        if len(b) != self.dim:
            raise DimensionMismatch("barrier length must equal dim")
        object.__setattr__(self, "barrier", b)

    def model(self) -> CovarianceModel:
        return equicorrelated_model(self.dim, self.rho)

    def inverse(self) -> np.ndarray:
        d, r = self.dim, self.rho
        return (np.eye(d) - np.ones((d, d)) * r / (1.0 + r * (d - 1))) / (1.0 - r)


def _equicorr_lambda(a_i: np.ndarray, rho: float) -> np.ndarray:
    k = len(a_i)
    return (a_i - rho * a_i.sum() / (1.0 + rho * (k - 1))) / (1.0 - rho)


def solve_equicorrelated(spec: EquicorrSpec, tol: float = TOL) -> QpSolution:
    """Closed-form solve: the active set is a top-k set of the sorted barrier."""
    a = np.asarray(spec.barrier, dtype=float)
    if np.all(a <= 0):
        raise InvalidBarrier("barrier must have at least one strictly positive component")
    order = np.argsort(-a, kind="stable")
    rho = spec.rho
    for k in range(1, spec.dim + 1):
        idx = np.sort(order[:k])
        lam_i = _equicorr_lambda(a[idx], rho)
        if not np.all(lam_i > tol * max(1.0, float(np.max(np.abs(lam_i))))):
            continue
        jdx = np.sort(order[k:])
        a_tilde = np.full(spec.dim, rho * lam_i.sum())
        a_tilde[idx] = a[idx]
        if jdx.size and not np.all(a_tilde[jdx] >= a[jdx] - tol * (1.0 + np.abs(a[jdx]))):
            continue
        return _assemble(a, idx, lam_i, a_tilde, tol)
    return solve_qp(spec.model(), a, tol)


def full_index_condition(spec: EquicorrSpec) -> bool:
    """Whether every constraint is active, decided by Sigma^-1 a > 0."""
    a = _sorted_check(spec)
    return bool(np.all(_equicorr_lambda(a, spec.rho) > 0.0))


def printed_full_index_inequality(spec: EquicorrSpec) -> bool:
    """The literature form  a_d > sum(a) / (1 + rho (d - 1)).

    Disagrees with :func:`full_index_condition` e.g. for equal components;
    kept for comparison only.
    """
    a = _sorted_check(spec)
    return bool(a[-1] > a.sum() / (1.0 + spec.rho * (spec.dim - 1)))


def _sorted_check(spec: EquicorrSpec) -> np.ndarray:
    a = np.asarray(spec.barrier, dtype=float)
    if np.any(np.diff(a) > 0) or not a[0] > 0:
        raise ValueError("barrier must be sorted descending with a_1 > 0")
    return a
