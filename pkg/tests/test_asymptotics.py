import math

import numpy as np
import pytest
from scipy.special import ndtr

from brisk.asymptotics import (AsymptoticBudgets, asymptotic_psi, bernoulli_asymptotic_factor, compute_ia,
                               estimate_ia, estimate_ia_extended, estimate_ia_quadrature, exact_ruin_1d,
                               tail_term, uniform_tail_expansion, uniform_trend_asymptotic, upper_bound_constant)
from brisk.errors import (BudgetTooSmall, DegenerateBound, DimensionTooLarge, DomainError, PartialIndexSet)
from brisk.gaussian import build_model, density, equicorrelated_model, tail_probability, univariate_phibar
from brisk.qp import solve_qp
from brisk.simulator import RuinScenario
from brisk.trend import Bernoulli, PointMass, UniformBox

ONE = build_model([[1.0]])


def test_exact_ruin_examples():
    assert exact_ruin_1d(0, 1, 1, 1) == pytest.approx(1.0, abs=1e-15)
    assert exact_ruin_1d(1, 0, 1, 1) == pytest.approx(2 * ndtr(-1.0), rel=1e-14)
    assert exact_ruin_1d(1, 1, 1, 1) == pytest.approx(0.090418, abs=1e-6)
    with pytest.raises(DomainError):
        exact_ruin_1d(-1, 0, 1, 1)
    with pytest.raises(DomainError):
        exact_ruin_1d(1, 0, 0, 1)
    with pytest.raises(DomainError):
        exact_ruin_1d(1, 0, 1, 0)


def test_exact_ruin_no_spurious_underflow():
    # large negative drift: the second term alone carries the probability
    assert exact_ruin_1d(2.0, -400.0, 1.0, 1.0) == 1.0
    v = exact_ruin_1d(30.0, 5.0, 1.0, 1.0)
    assert 0 < v < 1e-200


def test_exact_ruin_reflection():
    for u in np.linspace(0, 8, 81):
        assert exact_ruin_1d(u, 0, 1, 1) == pytest.approx(2 * ndtr(-u), rel=1e-12, abs=1e-300)


def test_exact_ruin_grid_properties():
    us = np.linspace(0, 5, 10)
    cs = np.linspace(-2, 2, 10)
    ss = np.linspace(0.5, 2, 10)
    ts = np.linspace(0.5, 4, 10)
    vals = np.array([[[[exact_ruin_1d(u, c, s, t) for t in ts] for s in ss] for c in cs] for u in us])
    assert np.all((vals >= 0) & (vals <= 1))
    slack = 1e-14
    assert np.all(np.diff(vals, axis=0) <= slack)   # u
    assert np.all(np.diff(vals, axis=1) <= slack)   # c
    assert np.all(np.diff(vals, axis=3) >= -slack)  # T


def test_ia_zero_horizon():
    qp = solve_qp(ONE, [1.0])
    est = estimate_ia(qp, ONE, 0.0)
    assert est.point == 1.0 and est.stderr == 0.0


def test_ia_single_index():
    qp = solve_qp(ONE, [1.0])
    est = estimate_ia(qp, ONE, 20.0, 4096, 20_000, seed=1)
    assert abs(est.point - 2.0) < 3 * est.stderr + 0.04
    assert est.point < 2.0 + 3 * est.stderr


def test_ia_budget_errors(identity2):
    qp = solve_qp(ONE, [1.0])
    with pytest.raises(BudgetTooSmall):
        estimate_ia(qp, ONE, 5.0, 4096, 999)
    with pytest.raises(ValueError):
        estimate_ia(qp, ONE, 5.0, 128, 1000)
    m4 = build_model(np.eye(4))
    with pytest.raises(DimensionTooLarge):
        estimate_ia(solve_qp(m4, np.ones(4)), m4, 5.0)


def test_ia_monotone_in_horizon(identity2):
    qp = solve_qp(identity2, [1.0, 1.0])
    a = estimate_ia(qp, identity2, 10.0, 4096, 4000, seed=2)
    b = estimate_ia(qp, identity2, 20.0, 4096, 4000, seed=2)
    # the longer horizon extends the same paths
    assert b.point >= a.point - 2 * math.hypot(a.stderr, b.stderr)
    assert b.point >= a.point * (1 - 1e-9)


def test_ia_extension_history():
    qp = solve_qp(ONE, [1.0])
    est = estimate_ia_extended(qp, ONE, 5.0, 1024, 2000, seed=3)
    hist = est.extra["extension"]
    assert hist[0][0] == 5.0 and len(hist) >= 2
    assert [h[0] for h in hist] == [5.0 * 2**k for k in range(len(hist))]


def test_quadrature_cross_check_1d():
    qp = solve_qp(ONE, [1.0])
    quad = estimate_ia_quadrature(qp, ONE, 20.0, inner_paths=2000, seed=4, n_steps=1024)
    path = estimate_ia(qp, ONE, 20.0, 1024, 2000, seed=4)
    assert abs(quad.point - path.point) < 3 * math.hypot(quad.stderr, path.stderr)
    assert quad.extra["truncation_at_x_hi"] < 1e-6


def test_quadrature_cross_check_2d(identity2):
    qp = solve_qp(identity2, [1.0, 1.0])
    quad = estimate_ia_quadrature(qp, identity2, 10.0, inner_paths=600, seed=5, n_steps=1024)
    path = estimate_ia(qp, identity2, 10.0, 1024, 4000, seed=6)
    assert abs(quad.point - path.point) < 3 * math.hypot(quad.stderr, path.stderr)
    assert quad.extra["truncation_at_x_hi"] < 1e-6


def test_quadrature_cap(identity2):
    qp = solve_qp(identity2, [1.0, 1.0])
    with pytest.raises(BudgetTooSmall):
        estimate_ia_quadrature(qp, identity2, 5.0, grid=1000, inner_paths=2000)


def test_quadrature_fallback_four_active():
    m4 = equicorrelated_model(4, 0.2)
    qp = solve_qp(m4, np.ones(4))
    est = compute_ia(qp, m4, 2.0, AsymptoticBudgets(ia_steps=256, quad_grid=6, quad_paths=40), seed=1)
    assert est.meta == "ia-quadrature" and est.point > 0


def _scenario(model, barrier, u, trend=None, T=1.0):
    return RuinScenario(model, barrier, trend, T, u, 1024, 1000, 3)


SMALL = AsymptoticBudgets(ia_paths=2000, ia_steps=1024, tail_budget=100_000, extend=False)


def test_asymptotic_single_active(rho_half):
    res = asymptotic_psi(_scenario(rho_half, [1.0, 0.3], 4.0), 20.0, SMALL)
    assert res.lambda_product == pytest.approx(1.0)
    target = 2 * tail_probability(rho_half, [4.0, 1.2], 100_000, seed=9).point
    assert abs(res.ia_estimate.point - 2.0) < 3 * res.ia_estimate.stderr + 0.05
    assert res.psi_approx.point == pytest.approx(target, rel=0.1)


def test_assembly_identity_and_point_mass(rho_half):
    res = asymptotic_psi(_scenario(rho_half, [1.0, 0.8], 3.0), 10.0, SMALL)
    assert res.psi_approx.point == pytest.approx(
        res.lambda_product * res.ia_estimate.point * res.tail_term.point, rel=1e-12)
    direct = tail_probability(rho_half, np.array([1.0, 0.8]) * 3.0, SMALL.tail_budget, 3)
    assert res.tail_term.point == direct.point and res.tail_term.stderr == direct.stderr


def test_horizon_rescaling(rho_half):
    trend = PointMass([0.2, 0.1])
    long = asymptotic_psi(_scenario(rho_half, [1.0, 0.8], 3.0, trend, T=4.0), 10.0, SMALL)
    unit = asymptotic_psi(_scenario(rho_half, [0.5, 0.4], 3.0, PointMass([0.4, 0.2])), 10.0, SMALL)
    assert long.psi_approx.point == unit.psi_approx.point
    assert long.meta["rescale"] == 2.0


def test_precomputed_ia_is_used(rho_half):
    sc = _scenario(rho_half, [1.0, 0.8], 3.0)
    first = asymptotic_psi(sc, 10.0, SMALL)
    again = asymptotic_psi(sc.replace(level=4.0), 10.0, SMALL, ia=first.ia_estimate)
    assert again.ia_estimate is first.ia_estimate


def test_bernoulli_tail_factor(identity2):
    tail = tail_term(identity2, [1, 1], 5.0, Bernoulli([0.5, 0.5]), 200_000, seed=1)
    base = univariate_phibar(5.0) ** 2
    assert tail.point / base == pytest.approx(0.25, rel=0.05)


def test_uniform_tail_joint_mc(identity2):
    tail = tail_term(identity2, [1, 1], 3.0, UniformBox([0, 0], [1, 1]), 400_000, seed=2)
    # independent components: E P(Z > 3 + U)^2 factorises
    x = np.linspace(0, 1, 20001)
    one = np.trapezoid(univariate_phibar(3.0 + x), x)
    assert abs(tail.point - one**2) < 3 * tail.stderr
    assert tail.extra["eta"] == "joint-mc"


def test_uniform_tail_expansion_examples(identity2, rho_half):
    qp = solve_qp(identity2, [1.0, 1.0])
    v = uniform_tail_expansion(identity2, qp, 3.0, [0.0, 0.0])
    assert v == pytest.approx(math.exp(-9) / (9 * 2 * math.pi), rel=1e-12)
    assert v == pytest.approx(2.1819e-6, rel=5e-4)
    assert v / univariate_phibar(3.0) ** 2 == pytest.approx(1.197, abs=1e-3)
    # J empty: no correction integral
    assert v == pytest.approx(uniform_tail_expansion(identity2, qp, 3.0, [0.0, 0.0], budget=1000, seed=99))
    qp2 = solve_qp(rho_half, [1.0, 0.3])
    assert qp2.complement == (1,) and qp2.weak_set == ()
    e = uniform_tail_expansion(rho_half, qp2, 6.0, [0.0, 0.0])
    ref = tail_probability(rho_half, [6.0, 1.8], 1_000_000, seed=3)
    assert 0.85 <= e / ref.point <= 1.15
    with pytest.raises(DomainError):
        uniform_tail_expansion(identity2, qp, 0.0, [0.0, 0.0])


def test_uniform_tail_expansion_weak_set(rho_half):
    # a on the weak boundary: the correction is the half-line Gaussian mass
    qp = solve_qp(rho_half, [1.0, 0.5])
    assert qp.weak_set == (1,)
    full = uniform_tail_expansion(rho_half, qp, 6.0, [0.0, 0.0])
    free = uniform_tail_expansion(rho_half, solve_qp(rho_half, [1.0, 0.3]), 6.0, [0.0, 0.0])
    assert full == pytest.approx(0.5 * free, rel=1e-12)


def test_upper_bound_constant_examples(identity2):
    c0 = upper_bound_constant(identity2, PointMass([0.0, 0.0]), 1.0, 200_000, seed=1)
    assert abs(c0.point - 4.0) < 3 * c0.stderr
    c1 = upper_bound_constant(identity2, PointMass([1.0, 1.0]), 1.0, 200_000, seed=2)
    assert abs(c1.point - 1 / univariate_phibar(1.0) ** 2) < 3 * c1.stderr
    c2 = upper_bound_constant(ONE, PointMass([-1.0]), 1.0, 200_000, seed=3)
    assert abs(c2.point - 2.0) < 3 * c2.stderr
    assert c2.extra["c_raw_form"] < c2.point
    with pytest.raises(DegenerateBound):
        upper_bound_constant(identity2, PointMass([6.0, 6.0]), 1.0, 100_000, seed=4)


def test_trend_factors(identity2):
    assert bernoulli_asymptotic_factor([0.5, 0.5]) == 0.25
    assert bernoulli_asymptotic_factor([0.0, 0.0, 0.0]) == 1.0
    qp = solve_qp(identity2, [1.0, 1.0])
    assert uniform_trend_asymptotic(qp, 10.0) == pytest.approx(1e-2)
    with pytest.raises(PartialIndexSet):
        uniform_trend_asymptotic(solve_qp(equicorrelated_model(2, 0.5), [1.0, 0.3]), 10.0)
    with pytest.raises(ValueError):
        bernoulli_asymptotic_factor([1.5])
