import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from brisk.errors import DimensionMismatch, InvalidBarrier, SingularMatrix
from brisk.gaussian import (GaussianVector, build_model, density, equicorrelated_model, from_covariance,
                            log_density, sample, tail_probability, tail_probability_mixture, univariate_phi,
                            univariate_phibar)

from .conftest import random_spd


def test_identity_model():
    m = build_model(np.eye(2))
    np.testing.assert_array_equal(m.sigma, np.eye(2))
    np.testing.assert_array_equal(m.chol, np.eye(2))


def test_correlated_mixing():
    rho = 0.5
    m = build_model([[1, 0], [rho, math.sqrt(1 - rho**2)]])
    np.testing.assert_allclose(m.sigma, [[1, 0.5], [0.5, 1]], atol=1e-15)
    np.testing.assert_allclose(m.sigma @ m.sigma_inv, np.eye(2), atol=1e-12)


def test_singular_and_nonsquare():
    with pytest.raises(SingularMatrix):
        build_model([[1, 0], [1, 0]])
    with pytest.raises(DimensionMismatch):
        build_model([[1, 0, 0], [0, 1, 0]])


def test_model_is_read_only():
    m = equicorrelated_model(3, 0.2)
    with pytest.raises(ValueError):
        m.sigma[0, 0] = 2.0


def test_density_examples(rho_half):
    assert density(build_model([[1.0]]), [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    assert density(build_model(np.eye(2)), [0, 0]) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    expected = math.exp(-2 / 3) / (2 * math.pi * math.sqrt(0.75))
    assert density(rho_half, [1, 1]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.094354, abs=1e-6)


@given(st.integers(1, 5), st.integers(0, 10_000), st.floats(-4, 4))
def test_density_symmetry_and_log(d, seed, scale):
    r = np.random.default_rng(seed)
    m = from_covariance(random_spd(r, d))
    x = scale * r.normal(size=d)
    assert density(m, x) == pytest.approx(density(m, -x), rel=1e-12)
    if density(m, x) > 1e-290:
        assert math.exp(log_density(m, x)) == pytest.approx(density(m, x), rel=1e-12)


def test_log_density_matches_scipy():
    r = np.random.default_rng(0)
    s = random_spd(r, 4)
    x = r.normal(size=(10, 4))
    ref = stats.multivariate_normal(np.zeros(4), s).logpdf(x)
    np.testing.assert_allclose(log_density(from_covariance(s), x), ref, rtol=1e-11)


def test_gaussian_vector_shift(rho_half):
    g = GaussianVector(rho_half, [1.0, 1.0])
    assert g.log_density([1.0, 1.0]) == pytest.approx(log_density(rho_half, [0.0, 0.0]))
    with pytest.raises(ValueError):
        GaussianVector(rho_half, [np.inf, 0])


def test_sample_moments(identity2, rho_half):
    x = sample(identity2, 100_000, seed=1)
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    y = sample(rho_half, 100_000, seed=2)
    assert abs(np.corrcoef(y.T)[0, 1] - 0.5) < 0.02


def test_sample_deterministic_across_workers(rho_half, monkeypatch):
    monkeypatch.setenv("BRISK_THREADS", "1")
    a = sample(rho_half, 10_000, seed=9)
    monkeypatch.setenv("BRISK_THREADS", "4")
    b = sample(rho_half, 10_000, seed=9)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(sample(rho_half, 1, 3), sample(rho_half, 1, 3))


def test_univariate_phi():
    assert univariate_phi(0.0) == 0.5
    assert univariate_phibar(1.0) == pytest.approx(0.15865525393145707, rel=1e-12)
    x = np.linspace(-8, 8, 101)
    np.testing.assert_allclose(univariate_phi(-x), univariate_phibar(x), rtol=1e-14, atol=1e-300)
    assert univariate_phibar(40.0) < 1e-300


def _within(est, target, k=3.0):
    return abs(est.point - target) <= k * est.stderr


def test_tail_examples(identity2):
    e0 = tail_probability(identity2, [0, 0], 100_000, seed=1)
    assert e0.meta == "plain" and _within(e0, 0.25)
    e1 = tail_probability(identity2, [1, 1], 100_000, seed=2)
    assert _within(e1, univariate_phibar(1.0) ** 2)
    e4 = tail_probability(identity2, [4, 4], 100_000, seed=3)
    target = univariate_phibar(4.0) ** 2
    assert e4.meta == "tilted" and _within(e4, target) and e4.rel_stderr() < 0.05
    assert target == pytest.approx(1.0025e-9, rel=1e-3)


def test_tilted_and_plain_agree(rho_half):
    for b in ([0.5, 2.0], [1.0, 1.5], [2.0, 2.0]):
        p = tail_probability(rho_half, b, 200_000, seed=4, method="plain")
        t = tail_probability(rho_half, b, 200_000, seed=5, method="tilted")
        assert abs(p.point - t.point) <= 3 * math.hypot(p.stderr, t.stderr)


def test_diagonal_product_property():
    m = build_model(np.diag([1.0, 2.0, 0.5]))
    for b in ([0.3, 1.0, 0.2], [2.5, 3.0, 1.0]):
        e = tail_probability(m, b, 100_000, seed=6)
        target = float(np.prod(univariate_phibar(np.array(b) / m.std)))
        assert _within(e, target)


def test_tail_errors(identity2):
    with pytest.raises(InvalidBarrier):
        tail_probability(identity2, [-1, 0], 10_000, method="tilted")
    with pytest.raises(ValueError):
        tail_probability(identity2, [1, 1], 999)
    with pytest.raises(DimensionMismatch):
        tail_probability(identity2, [1, 1, 1], 10_000)


def test_mixture_matches_single_terms(identity2):
    bars = np.array([[3.0, 3.0], [3.5, 3.0]])
    mix = tail_probability_mixture(identity2, bars, [0.3, 0.7], 200_000, seed=8)
    target = 0.3 * univariate_phibar(3.0) ** 2 + 0.7 * univariate_phibar(3.5) * univariate_phibar(3.0)
    assert _within(mix, target)
