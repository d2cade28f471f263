import math

import numpy as np
import pytest
from scipy import integrate

from hyperstab import geometry as geo
from hyperstab.errors import InputError


def _random_ball(rng, n, size, rmax=0.95):
    v = rng.normal(size=(size, n))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * (rmax * rng.uniform(size=size) ** (1 / n))[:, None]


def test_distance_basic_values():
    x = np.array([0.3, -0.2, 0.1])
    assert geo.hyperbolic_distance(x, x) == 0.0
    assert geo.hyperbolic_distance([0.5, 0, 0], [0, 0, 0]) == pytest.approx(math.log(3), rel=1e-15)


def test_distance_symmetric_and_matches_acosh():
    rng = np.random.default_rng(1)
    x, y = _random_ball(rng, 4, 500), _random_ball(rng, 4, 500)
    d = geo.hyperbolic_distance(x, y)
    assert np.array_equal(d, geo.hyperbolic_distance(y, x))
    nx, ny = np.sum(x * x, 1), np.sum(y * y, 1)
    ref = np.arccosh(1 + 2 * np.sum((x - y) ** 2, 1) / ((1 - nx) * (1 - ny)))
    assert np.allclose(d, ref, rtol=1e-10)


def test_ballpoint_rejects_boundary():
    with pytest.raises(InputError):
        geo.BallPoint([0.6, 0.8])
    with pytest.raises(InputError):
        geo.BallPoint([np.nan, 0.0])
    assert geo.BallPoint([0.1, 0.2]).dim == 2


def test_translation_identity_and_origin():
    rng = np.random.default_rng(2)
    b, x = _random_ball(rng, 3, 50), _random_ball(rng, 3, 50)
    assert np.allclose(geo.hyperbolic_translate(np.zeros(3), x), x, atol=1e-15)
    assert np.allclose(geo.hyperbolic_translate(b, np.zeros((50, 3))), b, atol=1e-15)
    out = geo.hyperbolic_translate(geo.BallPoint([0.2, 0.1]), geo.BallPoint([0.0, 0.0]))
    assert isinstance(out, geo.BallPoint)


def test_translation_is_isometry():
    rng = np.random.default_rng(3)
    for n in (2, 3, 5):
        b, x, y = (_random_ball(rng, n, 2000, 0.9) for _ in range(3))
        d0 = geo.hyperbolic_distance(x, y)
        d1 = geo.hyperbolic_distance(geo.hyperbolic_translate(b, x), geo.hyperbolic_translate(b, y))
        assert np.max(np.abs(d1 - d0) / np.maximum(d0, 1e-300)) < 1e-12


def test_geodesic_cosine_special_angles():
    r1, r2 = 1.3, 0.4
    assert geo.geodesic_cosine(r1, r2, 0.0) == pytest.approx(r1 - r2, rel=1e-14)
    assert geo.geodesic_cosine(r1, r2, math.pi) == pytest.approx(r1 + r2, rel=1e-14)
    for th in (0.1, 1.0, 2.5):
        assert geo.geodesic_cosine(r1, 0.0, th) == pytest.approx(r1, rel=1e-14)


def test_geodesic_cosine_against_ball_points():
    rng = np.random.default_rng(4)
    r1, r2, th = rng.uniform(0, 5, 100), rng.uniform(0, 5, 100), rng.uniform(0, math.pi, 100)
    x = np.stack([np.tanh(r1 / 2), np.zeros(100)], 1)
    y = np.stack([np.tanh(r2 / 2) * np.cos(th), np.tanh(r2 / 2) * np.sin(th)], 1)
    assert np.allclose(geo.geodesic_cosine(r1, r2, th), geo.hyperbolic_distance(x, y), rtol=1e-12)


def test_green_n3_closed_form():
    r = np.linspace(0.1, 20, 60)
    assert np.allclose(geo.green_function(3, r), 2 / np.expm1(2 * r), rtol=1e-10, atol=0)
    mid = r < 5
    assert np.allclose(geo.green_function(3, r[mid]), 1 / np.tanh(r[mid]) - 1, rtol=1e-10)
    assert geo.green_function(3, 1.0) == pytest.approx(0.313035, abs=1e-6)


def test_green_against_direct_quadrature():
    for n, r in ((4, 0.7), (5, 2.0)):
        ref, _ = integrate.quad(lambda s: np.sinh(s) ** (1 - n), r, 60, epsrel=1e-13, limit=200)
        assert geo.green_function(n, r) == pytest.approx(ref, rel=1e-10)


def test_green_asymptotic_regimes():
    c_far, c_near = geo.green_asymptotics(3)
    r = np.array([10.0, 15.0, 20.0])
    ratio = geo.green_function(3, r) * np.exp(2 * r)
    assert np.allclose(ratio, c_far, rtol=1e-6)
    _, c4 = geo.green_asymptotics(4)
    small = np.array([1e-3, 1e-2, 1e-1])
    g = geo.green_function(4, small) * small**2
    assert np.all(g > 0.5 * c4) and np.all(g < 2 * c4)
    with pytest.raises(InputError):
        geo.green_function(3, 0.0)


def test_gll_rule_exactness():
    x, w, D, _ = geo.gll_rule(8)
    for k in range(2 * 8 - 2):
        assert np.dot(w, x**k) == pytest.approx((1 - (-1) ** (k + 1)) / (k + 1), abs=1e-14)
    assert np.allclose(D @ x**3, 3 * x**2, atol=1e-12)


def test_radial_grid_weights_and_volume():
    g = geo.make_radial_grid(3, rho_max=5.0, tail_tol=1.0)
    assert np.all(g.quad_weights >= 0)
    vol = (math.sinh(10.0) / 2 - 5.0) / 2
    assert geo.integrate_radial(g, np.ones(g.size)) / g.omega == pytest.approx(vol, rel=1e-12)


def test_integrate_radial_exponential():
    g = geo.make_radial_grid(3, rho_max=30.0)
    assert geo.integrate_radial(g, np.zeros(g.size)) == 0.0
    val = geo.integrate_radial(g, np.exp(-4 * g.nodes))
    assert val == pytest.approx(4 * math.pi / 24, rel=1e-12)
    assert val == pytest.approx(0.5236, abs=1e-4)


def test_integrate_radial_refinement_converges():
    f = lambda r: 1 / np.cosh(r) ** 5
    vals = []
    for order in (4, 6, 8):
        g = geo.make_radial_grid(3, rho_max=30.0, order=order)
        vals.append(geo.integrate_radial(g, f(g.nodes)))
    ref, _ = integrate.quad(lambda r: f(r) * np.sinh(r) ** 2, 0, 30, epsrel=1e-14)
    errs = [abs(v / (4 * math.pi) - ref) for v in vals]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-10


def test_integrate_radial_shape_mismatch():
    g = geo.make_radial_grid(3, rho_max=5.0, tail_tol=1.0)
    with pytest.raises(InputError):
        geo.integrate_radial(g, np.ones(3))


def test_integral_invariance_under_translation():
    n = 3
    g = geo.make_radial_grid(n, rho_max=30.0)
    f = lambda d: np.exp(-2 * d * d)
    ref = geo.integrate_radial(g, f(g.nodes))
    for s in (0.3, 1.7, 6.0):
        val = geo.integrate_translated(f, s, n, d_cut=8.0)
        assert val == pytest.approx(ref, rel=1e-10)


def test_axisym_grid_volume():
    g = geo.make_radial_grid(4, rho_max=4.0, tail_tol=1.0)
    g2 = geo.make_axisym_grid(g, 16)
    vol = np.sum(g2.weights)
    assert vol == pytest.approx(geo.integrate_radial(g, np.ones(g.size)), rel=1e-12)
