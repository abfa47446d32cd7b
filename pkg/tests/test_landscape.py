import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdescape.errors import DimensionError, LandscapeError
from sgdescape.landscape import (
    CovarianceModel,
    Domain,
    Landscape,
    boundary_points,
    compensated_radius,
    covariance,
    covariance_sqrt,
    depth,
    flattest_boundary_points,
    gradient,
    loss_eval,
    matrix_power_spd,
    sharpness,
    sphere_points,
    validate_domain,
)


def random_spd(rng, d, lo=0.2, hi=5.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q @ np.diag(rng.uniform(lo, hi, d)) @ q.T


def test_loss_examples():
    ls = Landscape.diagonal([2.0])
    assert loss_eval(ls, [1.0]) == 1.0
    assert loss_eval(ls, [0.0]) == 0.0
    assert loss_eval(ls.replace(sharpness_scale=4.0), [1.0]) == 4.0


def test_minimum_is_exact():
    ls = Landscape(np.array([[2.0, 0.3], [0.3, 1.0]]), [0.5, -1.5], min_value=3.25)
    assert loss_eval(ls, ls.minimizer) == 3.25
    assert np.all(gradient(ls, ls.minimizer) == 0.0)


def test_gradient_examples():
    ls = Landscape.diagonal([2.0])
    assert gradient(ls, [1.0])[0] == 2.0
    two = Landscape.diagonal([2.0, 0.5], minimizer=[1.0, -1.0])
    np.testing.assert_array_equal(gradient(two, [2.0, 0.0]), [2.0, 0.5])


def test_sharpness_examples():
    assert sharpness(Landscape.diagonal([2.0, 0.5])) == 2.0
    assert sharpness(Landscape.diagonal([2.0], sharpness_scale=4.0)) == 8.0
    assert sharpness(Landscape.diagonal(np.ones(5))) == 1.0


@given(alpha=st.floats(0.1, 10.0), beta=st.floats(0.1, 10.0))
def test_sharpness_composes_scales(alpha, beta):
    ls = Landscape.diagonal([2.0, 0.5], sharpness_scale=alpha, depth_scale=beta)
    assert math.isclose(sharpness(ls), alpha * beta * 2.0, rel_tol=1e-12)


def test_covariance_examples():
    np.testing.assert_array_equal(covariance(Landscape.diagonal([2.0, 0.5])), np.diag([2.0, 0.5]))
    ident = Landscape.diagonal([2.0, 0.5], covariance_model="identity")
    np.testing.assert_array_equal(covariance(ident, [3.0, -1.0]), np.eye(2))
    assert covariance(Landscape.diagonal([2.0], sharpness_scale=4.0))[0, 0] == 8.0


def test_covariance_sqrt_examples():
    np.testing.assert_allclose(covariance_sqrt(Landscape.diagonal([4.0, 9.0])), np.diag([2.0, 3.0]),
                               rtol=1e-14)
    ident = Landscape.diagonal([4.0, 9.0], covariance_model=CovarianceModel.IDENTITY)
    np.testing.assert_array_equal(covariance_sqrt(ident), np.eye(2))


@pytest.mark.parametrize("seed", range(10))
def test_covariance_sqrt_reconstructs(seed):
    c = random_spd(np.random.default_rng(seed), 3)
    s = covariance_sqrt(Landscape(c, np.zeros(3)))
    np.testing.assert_allclose(s, s.T, atol=1e-14)
    assert np.linalg.norm(s @ s - c) <= 1e-10 * np.linalg.norm(c)


def test_matrix_power_rejects_indefinite():
    with pytest.raises(LandscapeError):
        matrix_power_spd(np.diag([1.0, -1.0]), 0.5)


def test_depth_examples():
    assert depth(Landscape.diagonal([2.0]), Domain([0.0], 1.0)) == 1.0
    assert depth(Landscape.diagonal([2.0, 0.5]), Domain([0.0, 0.0], 1.0)) == 0.25
    assert depth(Landscape.diagonal([2.0], depth_scale=3.0), Domain([0.0], 1.0)) == 3.0


def test_depth_requires_centered_domain():
    with pytest.raises(LandscapeError):
        depth(Landscape.diagonal([2.0]), Domain([0.1], 1.0))


@given(alpha=st.floats(0.01, 100.0), r=st.floats(0.01, 10.0))
def test_compensated_radius_keeps_depth(alpha, r):
    base = Landscape.diagonal([3.0, 0.7])
    scaled = base.replace(sharpness_scale=alpha)
    d0 = depth(base, Domain.around(base, r))
    d1 = depth(scaled, Domain.around(scaled, compensated_radius(r, alpha)))
    assert math.isclose(d0, d1, rel_tol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    ls = Landscape(random_spd(rng, 3), rng.standard_normal(3), sharpness_scale=1.7, depth_scale=0.6)
    h = 1e-5
    for _ in range(100):
        x = rng.standard_normal(3)
        fd = np.array([(loss_eval(ls, x + h * e) - loss_eval(ls, x - h * e)) / (2 * h) for e in np.eye(3)])
        g = gradient(ls, x)
        assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_depth_matches_brute_force(d):
    rng = np.random.default_rng(d)
    ls = Landscape(random_spd(rng, d), np.zeros(d))
    dom = Domain.around(ls, 0.8)
    pts = dom.radius * sphere_points(d, 10_000) if d > 1 else np.array([[-0.8], [0.8]])
    brute = min(loss_eval(ls, p) for p in pts) - ls.min_value
    assert abs(brute - depth(ls, dom)) <= 0.005 * depth(ls, dom)


@pytest.mark.parametrize("d,n", [(1, 2), (2, 17), (3, 32), (5, 40)])
def test_sphere_points_are_unit(d, n):
    pts = sphere_points(d, n)
    assert pts.shape == (n, d)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=1e-12)


def test_boundary_points_and_normal():
    dom = Domain([1.0, 2.0], 0.5)
    for p in boundary_points(dom, 12):
        assert math.isclose(np.linalg.norm(p - dom.center), 0.5, rel_tol=1e-12)
        n = dom.normal(p)
        assert math.isclose(np.linalg.norm(n), 1.0, rel_tol=1e-12)


def test_flattest_boundary_points():
    ls = Landscape.diagonal([2.0, 0.5])
    pts = flattest_boundary_points(ls, Domain.around(ls, 2.0))
    np.testing.assert_allclose(np.abs(pts), [[0.0, 2.0], [0.0, 2.0]], atol=1e-15)
    np.testing.assert_allclose(pts[0], -pts[1])


def test_domain_contains():
    dom = Domain([0.0, 0.0], 1.0)
    assert dom.contains([1.0, 0.0])
    assert not dom.contains([1.0, 1e-6])


@pytest.mark.parametrize("diag,n", [([2.0], 8), ([2.0, 0.5], 64), ([5.0, 1.0, 0.05], 64)])
def test_validate_domain_passes(diag, n):
    ls = Landscape.diagonal(diag)
    rep = validate_domain(ls, Domain.around(ls, 1.0), n)
    assert rep.inward_drift and rep.attracted and rep.passed


@pytest.mark.parametrize("hess", [np.diag([1.0, -0.1]), np.diag([1.0, 0.0]), np.array([[1.0, 0.5], [0.4, 1.0]])])
def test_invalid_hessian_rejected(hess):
    with pytest.raises(LandscapeError):
        Landscape(hess, np.zeros(2))


def test_dimension_mismatch():
    ls = Landscape.diagonal([1.0, 2.0])
    with pytest.raises(DimensionError):
        loss_eval(ls, [1.0])
    with pytest.raises(DimensionError):
        Landscape(np.eye(2), np.zeros(3))


@pytest.mark.parametrize("r", [0.0, -1.0, math.nan])
def test_domain_radius_positive(r):
    with pytest.raises(ValueError):
        Domain([0.0], r)


def test_landscape_is_immutable():
    ls = Landscape.diagonal([1.0])
    with pytest.raises(ValueError):
        ls.hessian[0, 0] = 3.0
