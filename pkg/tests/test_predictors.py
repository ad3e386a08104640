"""Moment generating functions and predictor samplers."""

import numpy as np
import pytest
from scipy.integrate import quad

from poismix import PredictorDistribution, UnsupportedOrder, mgf, sample_x

NORMAL = PredictorDistribution.STANDARD_NORMAL
UNIFORM = PredictorDistribution.UNIFORM_M1_P1


@pytest.mark.parametrize(
    "dist,t,order,expected",
    [
        (NORMAL, 0.0, 0, 1.0),
        (NORMAL, 0.0, 1, 0.0),
        (NORMAL, 0.0, 2, 1.0),
        (UNIFORM, 0.0, 0, 1.0),
        (UNIFORM, 0.0, 1, 0.0),
        (UNIFORM, 0.0, 2, 1.0 / 3.0),
    ],
)
def test_mgf_at_zero(dist, t, order, expected):
    assert mgf(dist, t, order) == pytest.approx(expected, abs=1e-15)


def test_uniform_mgf_against_quadrature():
    # independent oracle: high-resolution numerical integration of E exp(tX)
    for t in (0.7, -1.3, 0.005, 2.5):
        oracle, err = quad(lambda v: 0.5 * np.exp(t * v), -1.0, 1.0, epsabs=1e-13)
        assert mgf(UNIFORM, t, 0) == pytest.approx(oracle, rel=1e-10)


def test_normal_mgf_closed_form():
    for t in (0.7, -1.3, 2.0):
        phi = np.exp(0.5 * t * t)
        assert mgf(NORMAL, t, 0) == pytest.approx(phi, rel=1e-14)
        assert mgf(NORMAL, t, 1) == pytest.approx(t * phi, rel=1e-14)
        assert mgf(NORMAL, t, 2) == pytest.approx((1 + t * t) * phi, rel=1e-14)


def test_mgf_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        mgf(NORMAL, 0.0, 3)
    with pytest.raises(ValueError):
        mgf(NORMAL, np.inf, 0)


@pytest.mark.parametrize("dist", [NORMAL, UNIFORM])
def test_mgf_derivatives_match_finite_differences(dist):
    # grid over [-3, 3] including the series/direct switch region of the
    # uniform branch
    h = 1e-5
    for t in np.concatenate([np.linspace(-3, 3, 25), [-0.009, -0.002, 0.002, 0.009]]):
        fd1 = (mgf(dist, t + h, 0) - mgf(dist, t - h, 0)) / (2 * h)
        fd2 = (mgf(dist, t + h, 1) - mgf(dist, t - h, 1)) / (2 * h)
        assert mgf(dist, t, 1) == pytest.approx(fd1, rel=1e-6, abs=1e-9)
        assert mgf(dist, t, 2) == pytest.approx(fd2, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("dist", [NORMAL, UNIFORM])
def test_tilted_variance_positive(dist):
    # phi''(t) phi(t) - phi'(t)^2 is phi(t)^2 times the variance of the
    # exponentially tilted predictor, so it must be strictly positive
    for t in np.linspace(-1.5, 1.5, 31):
        gap = mgf(dist, t, 2) * mgf(dist, t, 0) - mgf(dist, t, 1) ** 2
        assert gap > 0


@pytest.mark.parametrize("dist", [NORMAL, UNIFORM])
@pytest.mark.parametrize("t", [-1.0, 0.5, 2.0])
def test_mgf_matches_monte_carlo(dist, t):
    n_draws = 100_000
    x = sample_x(dist, 1, n_draws, seed=901).ravel()
    vals = np.exp(t * x)
    bound = 4.0 * vals.std() / np.sqrt(n_draws)
    assert abs(vals.mean() - mgf(dist, t, 0)) < bound


def test_sample_x_deterministic():
    a = sample_x(NORMAL, 2, 3, seed=42)
    b = sample_x(NORMAL, 2, 3, seed=42)
    assert np.array_equal(a, b)
    c = sample_x(NORMAL, 2, 3, seed=43)
    assert not np.array_equal(a, c)


def test_uniform_sample_mean_clt_bound():
    x = sample_x(UNIFORM, 100, 100, seed=7)
    # sigma^2 = 1/3 for Uniform(-1,1)
    assert abs(x.mean()) < 4.0 * np.sqrt(1.0 / 3.0) / np.sqrt(x.size)
    assert x.min() >= -1.0 and x.max() <= 1.0


def test_normal_sample_variance_bound():
    x = sample_x(NORMAL, 100, 100, seed=8)
    # var of the sample variance of N(0,1) is about 2/N
    assert abs(x.var(ddof=1) - 1.0) < 4.0 * np.sqrt(2.0 / x.size)


def test_from_name():
    assert PredictorDistribution.from_name("normal") is NORMAL
    assert PredictorDistribution.from_name("uniform") is UNIFORM
    with pytest.raises(ValueError):
        PredictorDistribution.from_name("cauchy")
