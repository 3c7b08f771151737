"""Dense SPD linear algebra and multivariate Gaussian primitives."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import DimensionMismatch, InvalidBarrier, SingularMatrix
from .results import EstimateWithCI
from .rng import TAG_SAMPLE, TAG_TAIL, child_generator, chunk_ranges, map_chunks

PIVOT_RTOL = 1e-12
SYMMETRY_ATOL = 1e-12
INVERSE_ATOL = 1e-8
PLAIN_MC_LEVEL = 2.0
TAIL_CHUNK = 1 << 16


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Covariance geometry of W(t) = A B(t): Sigma = A A^T, its Cholesky
    factor and its inverse.  Build with :func:`build_model`."""

    dim: int
    mixing: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray
    sigma_inv: np.ndarray

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma))

    def submodel(self, idx) -> "CovarianceModel":
        """Model of the sub-vector W_idx (covariance Sigma[idx, idx])."""
        idx = np.asarray(idx, dtype=int)
        return from_covariance(self.sigma[np.ix_(idx, idx)])


def build_model(mixing) -> CovarianceModel:
    a = np.asarray(mixing, dtype=float)
    if a.ndim == 1 and a.size == 1:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"mixing matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("mixing matrix has non-finite entries")
    return _model_from(a, a @ a.T)


def from_covariance(sigma) -> CovarianceModel:
    """Model for a given covariance matrix (mixing taken as its Cholesky factor)."""
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {s.shape}")
    if np.max(np.abs(s - s.T)) > SYMMETRY_ATOL * max(1.0, np.max(np.abs(s))):
        raise ValueError("covariance matrix is not symmetric")
    chol = _checked_cholesky(0.5 * (s + s.T))
    return _model_from(chol, chol @ chol.T, chol)


def equicorrelated_model(dim: int, rho: float) -> CovarianceModel:
    s = np.full((dim, dim), float(rho))
    np.fill_diagonal(s, 1.0)
    return from_covariance(s)


def _checked_cholesky(sigma: np.ndarray) -> np.ndarray:
    d = sigma.shape[0]
    scale = float(np.max(np.diag(sigma))) if d else 0.0
    if not scale > 0.0:
        raise SingularMatrix("covariance has no positive diagonal entry")
    chol = np.zeros_like(sigma)
    # explicit pivots so the threshold is the documented one, not LAPACK's
    for j in range(d):
        pivot = sigma[j, j] - chol[j, :j] @ chol[j, :j]
        if not pivot > PIVOT_RTOL * scale:
            raise SingularMatrix(f"Cholesky pivot {j} is {pivot:.3e} (<= {PIVOT_RTOL:g} * max diagonal)")
        chol[j, j] = math.sqrt(pivot)
        chol[j + 1:, j] = (sigma[j + 1:, j] - chol[j + 1:, :j] @ chol[j, :j]) / chol[j, j]
    return chol


def _model_from(mixing, sigma, chol=None) -> CovarianceModel:
    sigma = 0.5 * (sigma + sigma.T)
    if chol is None:
        chol = _checked_cholesky(sigma)
    d = sigma.shape[0]
    sigma_inv = linalg.cho_solve((chol, True), np.eye(d))
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    if np.max(np.abs(sigma @ sigma_inv - np.eye(d))) > INVERSE_ATOL:
        raise SingularMatrix("covariance is too ill-conditioned to invert reliably")
    return CovarianceModel(d, _frozen(mixing), _frozen(sigma), _frozen(chol), _frozen(sigma_inv))


@dataclass(frozen=True, eq=False)
class GaussianVector:
    """N(mean_shift, Sigma) for a given model."""

    model: CovarianceModel
    mean_shift: np.ndarray | None = None

    def __post_init__(self):
        shift = np.zeros(self.model.dim) if self.mean_shift is None else np.asarray(self.mean_shift, float)
        if shift.shape != (self.model.dim,):
            raise DimensionMismatch("mean_shift has the wrong length")
        if not np.all(np.isfinite(shift)):
            raise ValueError("mean_shift must be finite")
        object.__setattr__(self, "mean_shift", _frozen(shift))

    def log_density(self, x) -> float:
        return log_density(self.model, np.asarray(x, float) - self.mean_shift)


def _vec(model: CovarianceModel, x, name="x") -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != model.dim:
        raise DimensionMismatch(f"{name} has length {x.shape[-1]}, model has dim {model.dim}")
    return x


def log_density(model: CovarianceModel, x) -> float | np.ndarray:
    """Log of the N(0, Sigma) density; accepts a vector or a stack of vectors."""
    x = _vec(model, x)
    y = linalg.solve_triangular(model.chol, x.T, lower=True)
    quad = np.sum(y * y, axis=0)
    out = -0.5 * (model.dim * math.log(2.0 * math.pi) + model.log_det + quad)
    return float(out) if np.ndim(out) == 0 else out


def density(model: CovarianceModel, x):
    return np.exp(log_density(model, x))


def univariate_phi(x):
    return special.ndtr(x)


def univariate_phibar(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def sample(model: CovarianceModel, n: int, seed) -> np.ndarray:
    """n i.i.d. rows from N(0, Sigma), generated chunk-wise as L z."""
    if n < 1:
        raise ValueError("n must be >= 1")

    def chunk(spec):
        c, _, size = spec
        z = child_generator(seed, TAG_SAMPLE, c).standard_normal((size, model.dim))
        return z @ model.chol.T

    return np.concatenate(map_chunks(chunk, chunk_ranges(n)))


def tilt_point(model: CovarianceModel, b) -> np.ndarray:
    """Optimizer of min x^T Sigma^-1 x s.t. x >= b (the IS mean shift)."""
    from .qp import solve_qp

    return solve_qp(model, b).a_tilde


def _choose_strategy(model, b_ref, method):
    standardized = b_ref / model.std
    if method == "auto":
        method = "plain" if np.all(standardized <= PLAIN_MC_LEVEL) or np.all(b_ref <= 0) else "tilted"
    if method == "tilted" and np.all(b_ref <= 0):
        raise InvalidBarrier("tilting needs a barrier with a positive component")
    if method not in ("plain", "tilted"):
        raise ValueError(f"unknown method {method!r}")
    return method


def tail_probability(model: CovarianceModel, b, budget: int = 100_000, seed=0,
                     method: str = "auto") -> EstimateWithCI:
    """Estimate P(W(1) > b) componentwise.

    ``method="auto"`` uses plain Monte Carlo when every standardized barrier
    component is <= 2 (or the barrier is non-positive) and exponential
    tilting to the quadratic-programming optimizer otherwise.
    """
    b = _vec(model, b, "b")
    return tail_probability_mixture(model, b[None, :], np.ones(1), budget, seed, method)


def tail_probability_mixture(model: CovarianceModel, barriers, weights, budget: int = 100_000,
                             seed=0, method: str = "auto", tilt=None) -> EstimateWithCI:
    """Estimate sum_k w_k P(W(1) > b_k) with common random numbers.

    One shared sample of W(1) (tilted towards the componentwise-smallest
    barrier unless ``tilt`` is given) is scored against every barrier, so the
    standard error accounts for the correlation between terms.
    """
    barriers = np.atleast_2d(np.asarray(barriers, dtype=float))
    _vec(model, barriers[0], "barrier")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (barriers.shape[0],):
        raise DimensionMismatch("one weight per barrier required")
    if budget < 1000:
        raise ValueError("tail budget must be >= 1000")
    b_ref = barriers.min(axis=0)
    if tilt is None:
        method = _choose_strategy(model, b_ref, method)
        shift = tilt_point(model, b_ref) if method == "tilted" else np.zeros(model.dim)
    else:
        shift = _vec(model, tilt, "tilt")
        method = "tilted"
    # x = shift + L z; log LR = -(L^-1 shift).z - q/2
    white_shift = linalg.solve_triangular(model.chol, shift, lower=True)
    half_q = 0.5 * float(white_shift @ white_shift)
    block = max(1, (1 << 22) // max(1, TAIL_CHUNK * model.dim))

    def chunk(spec):
        c, _, size = spec
        z = child_generator(seed, TAG_TAIL, c).standard_normal((size, model.dim))
        x = shift + z @ model.chol.T
        lr = np.exp(-(z @ white_shift) - half_q)
        score = np.zeros(size)
        for k0 in range(0, len(barriers), block):
            bb = barriers[k0:k0 + block]
            hit = np.all(x[:, None, :] > bb[None, :, :], axis=2)
            score += hit.astype(float) @ weights[k0:k0 + block]
        s = score * lr
        return float(s.sum()), float(s @ s)

    parts = map_chunks(chunk, chunk_ranges(budget, TAIL_CHUNK))
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    return EstimateWithCI.from_moments(s1, s2, budget, seed, method, shift=shift.tolist())
