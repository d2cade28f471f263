import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate

from hyperstab.errors import InputError
from hyperstab.euclidean import (
    AubinTalentiBubble,
    bubble_pde_residual,
    cutoff,
    peucs_quotient,
    peucs_table,
    sobolev_constant,
    sobolev_constant_exact,
)


def _sympy_laplacian(n, mu):
    r = sp.symbols("r", positive=True)
    U = (n * (n - 2)) ** sp.Rational(n - 2, 4) * mu ** sp.Rational(n - 2, 2) * (1 + mu**2 * r**2) ** sp.Rational(-(n - 2), 2)
    lap = sp.diff(U, r, 2) + (n - 1) / r * sp.diff(U, r)
    return sp.lambdify(r, lap, "numpy")


def test_bubble_formula():
    b = AubinTalentiBubble(np.array([0.5, 0.0, -1.0]), 2.0, 3)
    x = np.array([[0.5, 0.0, -1.0], [1.0, 2.0, 0.0]])
    r = np.linalg.norm(x - b.z, axis=1)
    ref = 3 ** 0.25 * 2.0**0.5 * (1 + 4 * r * r) ** -0.5
    assert np.allclose(b(x), ref, rtol=1e-15)


@pytest.mark.parametrize("n,mu", [(3, 1.0), (4, 0.5), (5, 3.0)])
def test_laplacian_against_sympy(n, mu):
    b = AubinTalentiBubble(np.zeros(n), mu, n)
    r = np.linspace(0.05, 20, 50)
    x = np.zeros((r.size, n))
    x[:, 0] = r
    assert np.allclose(b.laplacian(x), _sympy_laplacian(n, sp.nsimplify(mu))(r), rtol=1e-11, atol=1e-14)


def test_pde_residual_centre_far_and_moved():
    for n in (3, 4, 6):
        b = AubinTalentiBubble(np.zeros(n), 1.0, n)
        centre = np.zeros((1, n))
        far = np.zeros((1, n))
        far[0, 0] = 50.0
        assert bubble_pde_residual(b, centre) < 1e-10
        assert bubble_pde_residual(b, far) < 1e-10
        rng = np.random.default_rng(n)
        z = rng.normal(size=n)
        moved = AubinTalentiBubble(z, 4.0, n)
        assert bubble_pde_residual(moved, z + rng.normal(size=(100, n))) < 1e-10


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_sobolev_constant_closed_form(n):
    # n = 3 decays like 1/r, so the truncated tail limits the agreement
    assert sobolev_constant(n) == pytest.approx(sobolev_constant_exact(n), rel=1e-11)


def test_sobolev_constant_invariance():
    ref = sobolev_constant(4)
    for mu in (0.5, 1.0, 2.0):
        assert sobolev_constant(4, mu=mu, z=np.array([1.0, -2.0, 0.0, 3.0])) == pytest.approx(ref, rel=1e-6)


def test_energy_level_and_adaptive_oracle():
    for n in (3, 4):
        b = AubinTalentiBubble(np.zeros(n), 1.0, n)
        om = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        grad = om * integrate.quad(lambda r: b.radial_derivative(r) ** 2 * r ** (n - 1), 0, np.inf,
                                   epsrel=1e-12, limit=400)[0]
        qs = 2 * n / (n - 2)
        mass = om * integrate.quad(lambda r: b.radial(r) ** qs * r ** (n - 1), 0, np.inf, epsrel=1e-12, limit=400)[0]
        S = sobolev_constant(n)
        assert grad / mass ** (2 / qs) == pytest.approx(S, rel=1e-8)
        assert 0.5 * grad - mass / qs == pytest.approx(S ** (n / 2) / n, rel=1e-8)
    assert 0 < sobolev_constant(3) < sobolev_constant(4)


def test_cutoff_properties():
    r = np.linspace(0, 1, 2001)
    eta, deta = cutoff(r)
    assert np.all(eta[r <= 0.25] == 1) and np.all(eta[r >= 0.5] == 0)
    assert np.all(np.diff(eta) <= 0)
    num = np.gradient(eta, r)
    assert np.max(np.abs(num - deta)) < 1e-2


def test_peucs_limit_n5():
    n, lam = 5, 4.0
    # leading term: (4 lam - n(n-2)) int U^2 / (int U^{2*})^{2/2*}
    om = 8 * math.pi**2 / 3
    b = AubinTalentiBubble(np.zeros(n), 1.0, n)
    l2 = om * integrate.quad(lambda r: b.radial(r) ** 2 * r**4, 0, np.inf, epsrel=1e-12, limit=400)[0]
    lq = om * integrate.quad(lambda r: b.radial(r) ** (10 / 3) * r**4, 0, np.inf, epsrel=1e-12, limit=400)[0]
    limit = (4 * lam - n * (n - 2)) * l2 / lq ** 0.6
    assert limit == pytest.approx(15.7994, rel=1e-4)
    rows = peucs_table(n, lam, [1e-3, 3e-4, 1e-4])
    norm = np.array([r[3] for r in rows])
    assert np.all(np.diff(np.abs(norm - limit)) < 0)
    # the next correction is O(eps): extrapolate the last two points
    assert (3 * norm[2] - norm[1]) / 2 == pytest.approx(limit, rel=1e-3)
    assert peucs_quotient(n, lam, 0.01) < sobolev_constant_exact(n)


def test_peucs_log_slope_n4():
    n, lam = 4, 2.2
    eps = np.array([1e-3, 1e-4, 1e-5])
    y = np.array([(sobolev_constant_exact(n) - peucs_quotient(n, lam, e)) / e**2 for e in eps])
    slope = np.polyfit(np.log(1 / eps), y, 1)[0]
    pred = (4 * lam - n * (n - 2)) * 16 * math.pi**2 / sobolev_constant_exact(n)
    assert slope == pytest.approx(pred, rel=0.02)


def test_peucs_input_checks():
    with pytest.raises(InputError):
        peucs_quotient(3, 1.0, 0.01)
    with pytest.raises(InputError):
        peucs_quotient(5, 4.0, -0.1)
    with pytest.warns(UserWarning):
        peucs_quotient(5, 4.0, 0.2)
