import numpy as np
import pytest

from brisk.errors import InvalidTrend
from brisk.trend import Bernoulli, Discrete, PointMass, UniformBox, sample_trend, trend_rows


def test_point_mass_rows():
    x = sample_trend(PointMass([0.5, -1.0]), 1000, seed=1)
    assert np.all(x == [0.5, -1.0])


def test_bernoulli_draws():
    x = sample_trend(Bernoulli([0.5, 0.5]), 100_000, seed=2)
    assert set(np.unique(x)) <= {0.0, 1.0}
    assert np.all(np.abs(x.mean(axis=0) - 0.5) < 0.005)


def test_uniform_draws():
    x = sample_trend(UniformBox([0, 0], [1, 1]), 100_000, seed=3)
    assert np.all((x >= 0) & (x <= 1))
    assert np.all(np.abs(x.mean(axis=0) - 0.5) < 0.005)


def test_discrete_draws():
    t = Discrete([[0, 0], [1, 2]], [0.25, 0.75])
    x = sample_trend(t, 40_000, seed=4)
    assert abs(np.mean(x[:, 1] == 2.0) - 0.75) < 0.01
    vals, probs = t.atoms()
    assert probs.sum() == pytest.approx(1.0)


def test_bernoulli_atoms():
    vals, probs = Bernoulli([0.5, 0.2]).atoms()
    assert len(probs) == 4 and probs.sum() == pytest.approx(1.0)
    assert probs[np.all(vals == 0, axis=1)][0] == pytest.approx(0.4)


def test_bounds_and_scaling():
    t = UniformBox([0, -1], [1, 2])
    lo, hi = t.scaled(2.0).bounds
    np.testing.assert_allclose(lo, [0, -2])
    np.testing.assert_allclose(hi, [2, 4])
    lo, hi = Bernoulli([0.3]).bounds
    assert lo[0] <= 0 and hi[0] >= 1


def test_invalid_trends():
    with pytest.raises(InvalidTrend):
        UniformBox([1, 0], [0, 1])
    with pytest.raises(InvalidTrend):
        Discrete([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(InvalidTrend):
        Bernoulli([1.2])


def test_rows_are_chunk_consistent():
    t = UniformBox([0, 0], [1, 1])
    full = trend_rows(t, 5, 0, 10_000)
    np.testing.assert_array_equal(trend_rows(t, 5, 4096, 5000), full[4096:9096])
