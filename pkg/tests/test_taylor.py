"""Every linearization must touch its function at the expansion point and stay below it elsewhere."""
import numpy as np
import pytest

from uavcollect import taylor

from oracles import taylor_cases

H2 = 1e4
CASES = taylor_cases()


@pytest.mark.parametrize("name, sample, f, lb", CASES, ids=[c[0] for c in CASES])
def test_exact_at_expansion_point(name, sample, f, lb):
    _, x0 = sample()
    exact = f(x0)
    np.testing.assert_allclose(lb(x0, x0), exact, rtol=1e-9, atol=1e-9 * np.max(np.abs(exact)))


@pytest.mark.parametrize("name, sample, f, lb", CASES, ids=[c[0] for c in CASES])
def test_never_above_function(name, sample, f, lb):
    x, x0 = sample()
    true = f(x)
    gap = lb(x, x0) - true
    assert np.all(gap <= 1e-9 * np.maximum(1.0, np.abs(true)))


def test_inv_product_rate_midpoint_convex():
    rng = np.random.default_rng(3)
    a = rng.uniform(1e-3, 20, (10_000, 2))
    b = rng.uniform(1e-3, 20, (10_000, 2))
    f = taylor.inv_product_rate
    mid = f(*(0.5 * (a + b)).T)
    assert np.all(mid <= 0.5 * (f(*a.T) + f(*b.T)) + 1e-12)


def test_rate_slope_matches_finite_difference():
    d, gp = 3e4, 5e3
    h = 1e-3
    fd = (taylor.rate_over_distance(d + h, gp, H2) - taylor.rate_over_distance(d - h, gp, H2)) / (2 * h)
    assert taylor.rate_distance_slope(d, gp, H2) == pytest.approx(-fd, rel=1e-6)


def test_inv_product_gradient_matches_finite_difference():
    s0, i0, h = 0.7, 2.5, 1e-6
    gs, gi = taylor.inv_product_rate_grad(s0, i0)
    f = taylor.inv_product_rate
    assert gs == pytest.approx((f(s0 + h, i0) - f(s0 - h, i0)) / (2 * h), rel=1e-6)
    assert gi == pytest.approx((f(s0, i0 + h) - f(s0, i0 - h)) / (2 * h), rel=1e-6)
