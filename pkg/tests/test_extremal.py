import math

import numpy as np
import pytest

from hyperstab import geometry as geo
from hyperstab.errors import InputError, NormalizationError
from hyperstab.euclidean import sobolev_constant_exact
from hyperstab.extremal import (
    ModelParams,
    Profile,
    best_constant,
    lambda_norm_sq,
    lp_norm,
    ode_residual,
    translated_bubble_field,
)
from hyperstab.stability import axisym_norm_sq


def test_params_validation():
    assert ModelParams(3, 2, 0.5).branch == "subcritical"
    assert ModelParams(5, 7 / 3, 3.8).branch == "critical"
    for bad in ((2, 2, 0), (3, 1.0, 0), (3, 6, 0), (3, 2, 1.0), (5, 7 / 3, 3.0), (5, 2.5, 3.0)):
        with pytest.raises(InputError):
            ModelParams(*bad)


def test_exact_solution_n3_p2(ground):
    # 6 sech^2 solves u'' + 2 coth u' + u^2 = 0
    params, U, S = ground(3, 2, 0.0)
    rho = U.grid.nodes
    exact = 6 / np.cosh(rho) ** 2
    assert np.max(np.abs(U.values - exact)) < 1e-8
    assert S == pytest.approx((115.2 * math.pi) ** (1 / 3), rel=1e-8)


def test_residual_below_tolerance(ground):
    params, U, _ = ground(3, 2, 0.5)
    assert np.max(np.abs(ode_residual(U, params))) < 1e-8
    # independent centred differences of the interpolant
    r, h = np.linspace(0.5, 8, 40), 1e-3
    d1 = (U(r + h) - U(r - h)) / (2 * h)
    d2 = (U(r + h) - 2 * U(r) + U(r - h)) / h**2
    res = d2 + 2 * d1 / np.tanh(r) + 0.5 * U(r) + U(r) ** 2
    assert np.max(np.abs(res)) / U.values[0] ** 2 < 1e-5


def test_monotone_positive(ground):
    for key in ((3, 2, 0.5), (4, 3, 2.2)):
        _, U, _ = ground(*key)
        assert np.all(U.values > 0)
        assert np.all(np.diff(U.values) < 0)


def test_tail_exponent(ground):
    _, U, _ = ground(3, 2, 0.0)
    assert U.meta["tail_exponent"] == pytest.approx(2.0, rel=0.02)
    params, U, _ = ground(3, 2, 0.5)
    assert U.meta["tail_exponent"] == pytest.approx(params.beta_plus, rel=0.02)


def test_consistency_and_energy(ground):
    params, U, S = ground(4, 3, 2.2)
    assert U.meta["consistency"] < 1e-6
    e = lambda_norm_sq(U, params)
    assert e == pytest.approx(S ** ((params.p + 1) / (params.p - 1)), rel=1e-6)
    assert lp_norm(U, params.p + 1) ** (params.p + 1) == pytest.approx(e, rel=1e-6)


def test_below_euclidean_constant(ground):
    _, _, S = ground(4, 3, 2.2)
    assert S < sobolev_constant_exact(4)


def test_scaled_profile_rejected(ground):
    params, U, _ = ground(3, 2, 0.5)
    with pytest.raises(NormalizationError):
        best_constant(U.with_values(1.3 * U.values), params)


def test_lambda_norm_zero_and_positive(ground):
    params, U, _ = ground(4, 3, 2.2)
    assert lambda_norm_sq(U.with_values(np.zeros_like(U.values)), params) == 0.0
    near = ModelParams(4, 2, 0.9 * 9 / 4)
    rng = np.random.default_rng(7)
    rho = U.grid.nodes
    for _ in range(10):
        c, w = rng.uniform(0, 6), rng.uniform(0.3, 2)
        bump = np.where(np.abs(rho - c) < w, np.cos(0.5 * math.pi * (rho - c) / w) ** 4, 0.0)
        assert lambda_norm_sq(U.with_values(bump), near) > 0


def test_translated_bubble_invariance(ground):
    params, U, _ = ground(3, 2, 0.5)
    g2 = geo.make_axisym_grid(U.grid, 96)
    vals0, _ = translated_bubble_field(U, 0.0, g2, params)
    assert np.ptp(vals0, axis=1).max() == 0.0
    e0 = lambda_norm_sq(U, params)
    m0 = lp_norm(U, 3) ** 3
    for s in (0.7, 1.5, -1.0):
        vals, grad = translated_bubble_field(U, s, g2, params)
        assert axisym_norm_sq(vals, grad, g2, params.lam) == pytest.approx(e0, rel=1e-6)
        assert np.sum(g2.weights * vals**3) == pytest.approx(m0, rel=1e-6)


def test_csv_round_trip(tmp_path, ground):
    params, U, _ = ground(3, 2, 0.5)
    path = tmp_path / "u.csv"
    U.to_csv(path, params)
    V = Profile.from_csv(path, U.grid)
    assert np.array_equal(V.values, U.values)
    assert V.tail_rate == U.tail_rate
