import numpy as np
import pytest
from scipy import linalg

from hyperstab.errors import CorruptProfileError, InputError
from hyperstab.extremal import operator_matrix
from hyperstab.spectral import (
    first_eigenfunction_check,
    phi_from_translation,
    sector_spectrum,
    weighted_inner,
)

CASES = [(3, 2, 0.5), (4, 3, 2.2), (4, 2.5, 0.0)]


def _sem_eigs(params, U, l, k):
    # independent discretisation: SEM stiffness against the lumped weighted mass
    A = operator_matrix(U.grid, params, l)
    B = np.diag(U.grid.quad_weights * U.values ** (params.p - 1))
    # the origin carries no mass: condense it out (l = 0) or pin it (l > 0)
    if l == 0:
        A = A[1:, 1:] - np.outer(A[1:, 0], A[0, 1:]) / A[0, 0]
    else:
        A = A[1:, 1:]
    B = B[1:, 1:]
    # B is nearly singular in the tail, so take the largest 1/mu of (B, A)
    nu = linalg.eigh(B, A, eigvals_only=True, subset_by_index=[A.shape[0] - k, A.shape[0] - 1])
    return np.sort(1.0 / nu)


@pytest.mark.parametrize("key", CASES)
def test_known_eigenvalues(key, spectrum):
    p = key[1]
    r0, r1 = spectrum(*key, 0), spectrum(*key, 1)
    assert r0.eigenvalues[0] == pytest.approx(1.0, rel=1e-3)
    assert r1.eigenvalues[0] == pytest.approx(p, rel=1e-3)
    assert r0.eigenvalues[1] > p


@pytest.mark.parametrize("key", CASES[:2])
def test_against_sem_generalised_eigh(key, ground, spectrum):
    params, U, _ = ground(*key)
    for l in (0, 1, 2):
        ref = _sem_eigs(params, U, l, 2)
        assert np.allclose(spectrum(*key, l).eigenvalues[:2], ref, rtol=1e-4)


def test_richardson_consistent(spectrum):
    r = spectrum(3, 2, 0.5, 0)
    coarse, fine = r.levels["coarse"], r.levels["fine"]
    # second-order: coarse error about four times the fine error
    e_c, e_f = np.abs(coarse - r.eigenvalues), np.abs(fine - r.eigenvalues)
    assert np.all(e_f < e_c)
    assert np.allclose(e_c / e_f, 4.0, rtol=0.05)


def test_alignment_and_orthogonality(ground, spectrum):
    params, U, _ = ground(3, 2, 0.5)
    r = spectrum(3, 2, 0.5, 0)
    assert first_eigenfunction_check(r, U, 0) >= 0.9999
    assert first_eigenfunction_check(r, U, 1) <= 1e-6
    scaled = type(r)(r.l, r.eigenvalues, [f.with_values(-3 * f.values) for f in r.eigenfunctions],
                     r.weighted_norms, r.trusted, r.cutoff, r.levels)
    assert first_eigenfunction_check(scaled, U, 0) == pytest.approx(first_eigenfunction_check(r, U, 0), rel=1e-14)


def test_alignment_needs_radial_sector(ground, spectrum):
    _, U, _ = ground(3, 2, 0.5)
    with pytest.raises(InputError):
        first_eigenfunction_check(spectrum(3, 2, 0.5, 1), U)


def test_translation_derivative(ground):
    params, U, _ = ground(3, 2, 0.5)
    phi = phi_from_translation(U, 1e-3, params)
    assert phi.meta["rayleigh_quotient"] == pytest.approx(params.p, abs=1e-2)
    # exact derivative of the translated bubble at t = 0 is 2 U'
    inner = slice(1, 200)
    assert np.allclose(phi.values[inner], 2 * U.nodal_derivative()[inner], rtol=1e-4, atol=1e-8)


def test_translation_orthogonal_to_radial(ground):
    # Phi = phi(rho) cos(theta) integrates to zero against any radial weight
    params, U, _ = ground(3, 2, 0.5)
    phi = phi_from_translation(U, 1e-3, params)
    r = sector_spectrum(U, params, 1, 1)
    cos = weighted_inner(phi, r.eigenfunctions[0], U, params.p) / (
        np.sqrt(weighted_inner(phi, phi, U, params.p)) * r.weighted_norms[0])
    assert abs(cos) > 1 - 1e-6


def test_trusted_cutoff(spectrum):
    r = spectrum(3, 2, 0.5, 2)
    assert r.cutoff == 8.0
    assert list(r.trusted) == list(r.eigenvalues < 8.0)


def test_rejects_bad_profile(ground):
    params, U, _ = ground(3, 2, 0.5)
    with pytest.raises(CorruptProfileError):
        sector_spectrum(U.with_values(U.values - 1.0), params)
    with pytest.raises(InputError):
        sector_spectrum(U, params, l=0, k=0)
