"""Spectrum of (-Delta - lambda)/U^{p-1} in a spherical-harmonic sector.

Second-order finite volumes on a (possibly stretched) cell-centred grid give a
symmetric-definite tridiagonal pencil A - mu B. Eigenvalues come from Sturm
counts of the LDL^T factorisation (multisection), eigenvectors from inverse
iteration, and one halving of the mesh feeds a Richardson extrapolation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.special import erf

from . import geometry as geo
from .errors import CorruptProfileError, InputError, IterationLimitError
from .extremal import ModelParams, Profile, concentration_scale, lambda_norm_sq

__all__ = [
    "SpectralResult",
    "sector_spectrum",
    "first_eigenfunction_check",
    "phi_from_translation",
    "weighted_inner",
    "sturm_count",
    "build_pencil",
]


@dataclass(frozen=True, eq=False)
class SpectralResult:
    l: int
    eigenvalues: np.ndarray
    eigenfunctions: list
    weighted_norms: np.ndarray
    trusted: np.ndarray
    cutoff: float
    levels: dict = field(default_factory=dict)

    def rows(self):
        """(sector, index, eigenvalue, coarse, fine, trusted) for CSV output."""
        coarse = self.levels.get("coarse", self.eigenvalues)
        fine = self.levels.get("fine", self.eigenvalues)
        return [
            (self.l, i, float(self.eigenvalues[i]), float(coarse[i]), float(fine[i]), bool(self.trusted[i]))
            for i in range(self.eigenvalues.size)
        ]


@dataclass(frozen=True)
class _Pencil:
    rho: np.ndarray
    a: np.ndarray
    e: np.ndarray
    b: np.ndarray
    scale: np.ndarray  # u = scale * y


def _mapping(kappa: float, xi0: float):
    """rho(xi) with rho' = 1 - (1 - kappa) exp(-(xi/xi0)^2): spacing kappa*h near 0, h far out."""
    c = (1.0 - kappa) * xi0 * math.sqrt(math.pi) / 2.0

    def phi(xi):
        return xi - c * erf(xi / xi0)

    def dphi(xi):
        return 1.0 - (1.0 - kappa) * np.exp(-((xi / xi0) ** 2))

    return phi, dphi


def _stretch_for(profile: Profile, params: ModelParams, h: float):
    L = concentration_scale(float(profile.values[0]), params)
    kappa = min(1.0, L / (10.0 * h))
    xi0 = 4.0 * L / kappa if kappa < 1.0 else 1.0
    return kappa, xi0


def build_pencil(profile: Profile, params: ModelParams, l: int, h: float, R: float, kappa=1.0, xi0=1.0) -> _Pencil:
    """Cell-centred finite volumes in xi with rho = phi(xi); Dirichlet at rho = R."""
    n, p, lam = params.n, params.p, params.lam
    phi, dphi = _mapping(kappa, xi0)
    # solve phi(xi_end) = R for the computational length
    lo, hi = 0.0, R + xi0 + 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if phi(mid) < R else (lo, mid)
    N = int(round(hi / h))
    hx = hi / N
    xi_c = (np.arange(N) + 0.5) * hx
    xi_f = np.arange(N + 1) * hx
    rho_c, rho_f = phi(xi_c), phi(xi_f)
    rho_f[-1] = R
    s_c = np.sinh(rho_c) ** (n - 1)
    s_f = np.sinh(rho_f) ** (n - 1)
    jac_c = dphi(xi_c)
    flux = s_f / dphi(xi_f) / hx  # face coefficients; s_f[0] = 0 gives the natural condition at 0
    mass = hx * s_c * jac_c
    ang = l * (l + n - 2) / np.sinh(rho_c) ** 2
    a = flux[:-1] + flux[1:] + mass * (ang - lam)
    e = -flux[1:-1]
    U = profile(rho_c)
    if np.any(U <= 0) or not np.all(np.isfinite(U)):
        raise CorruptProfileError("weight U^{p-1} is not positive on the spectral grid")
    wgt = U ** (p - 1)
    # symmetric scaling by mass^{-1/2}
    sc = 1.0 / np.sqrt(mass)
    return _Pencil(rho_c, a * sc * sc, e * sc[:-1] * sc[1:], wgt, sc)


def sturm_count(pen: _Pencil, sigma) -> np.ndarray:
    """Number of eigenvalues of the pencil below each shift (inertia of A - sigma B)."""
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    a, e, b = pen.a, pen.e, pen.b
    e2 = e * e
    tiny = 1e-300
    d = a[0] - sig * b[0]
    cnt = (d < 0).astype(int)
    for i in range(1, a.size):
        d = np.where(d == 0.0, tiny, d)
        d = a[i] - sig * b[i] - e2[i - 1] / d
        cnt += d < 0
    return cnt


def _eigenvalues(pen: _Pencil, k: int, tol: float = 1e-14, passes: int = 60, m: int = 15) -> np.ndarray:
    hi = 4.0
    while sturm_count(pen, hi)[0] < k:
        hi *= 2.0
        if hi > 1e12:
            raise IterationLimitError("could not bracket the requested eigenvalues")
    lo_b = np.zeros(k)
    hi_b = np.full(k, hi)
    frac = np.linspace(0.0, 1.0, m + 2)[1:-1]
    for _ in range(passes):
        if np.all(hi_b - lo_b <= tol * np.maximum(hi_b, 1.0)):
            break
        shifts = lo_b[:, None] + (hi_b - lo_b)[:, None] * frac[None, :]
        counts = sturm_count(pen, shifts.ravel()).reshape(k, m)
        for j in range(k):
            below = counts[j] <= j
            if below.any():
                lo_b[j] = shifts[j][below].max()
            above = ~below
            if above.any():
                hi_b[j] = shifts[j][above].min()
    else:
        raise IterationLimitError("Sturm multisection did not converge")
    return 0.5 * (lo_b + hi_b)


def _eigenvector(pen: _Pencil, mu: float) -> np.ndarray:
    N = pen.a.size
    shift = mu * (1.0 + 1e-10)
    ab = np.zeros((3, N))
    ab[0, 1:] = pen.e
    ab[1] = pen.a - shift * pen.b
    ab[2, :-1] = pen.e
    y = np.ones(N) / math.sqrt(N)
    for _ in range(4):
        y = solve_banded((1, 1), ab, pen.b * y)
        y /= math.sqrt(np.dot(y, pen.b * y))
    # sign: positive at the maximum of |y| for definiteness
    if y[np.argmax(np.abs(y))] < 0:
        y = -y
    return y


def _to_profile(pen: _Pencil, y: np.ndarray, grid: geo.RadialGrid, l: int, tail: float, R: float) -> Profile:
    u = pen.scale * y
    # parity extension through the origin: sector l behaves like rho^l
    sgn = 1.0 if l % 2 == 0 else -1.0
    x = np.concatenate((-pen.rho[::-1], pen.rho, [R]))
    v = np.concatenate((sgn * u[::-1], u, [0.0]))
    cs = CubicSpline(x, v)
    vals = np.where(grid.nodes <= R, cs(np.minimum(grid.nodes, R)), 0.0)
    if l > 0:
        vals[0] = 0.0
    return Profile(grid, vals, l, {"tail_exponent": tail})


def weighted_inner(f: Profile, g: Profile, profile: Profile, p: float) -> float:
    """int U^{p-1} f g dv on the profile grid (same-sector radial parts)."""
    w = profile.values ** (p - 1)
    return geo.integrate_radial(profile.grid, w * f.values * g.values)


def sector_spectrum(
    profile: Profile,
    params: ModelParams,
    l: int = 0,
    k: int = 3,
    h: float = 0.02,
    refine: bool = True,
    cutoff: float | None = None,
    R: float | None = None,
) -> SpectralResult:
    """k smallest eigenvalues of -Delta psi - lambda psi = mu U^{p-1} psi in sector l."""
    if k < 1 or l < 0:
        raise InputError("need k >= 1 and l >= 0")
    if profile.l != 0 or np.any(profile.values <= 0):
        raise CorruptProfileError("the weight profile must be a positive radial ground state")
    R = profile.grid.rho_max if R is None else R
    cutoff = 4.0 * params.p if cutoff is None else cutoff
    kappa, xi0 = _stretch_for(profile, params, h)
    pen = build_pencil(profile, params, l, h, R, kappa, xi0)
    coarse = _eigenvalues(pen, k)
    levels = {"coarse": coarse, "h": h, "stretch": kappa}
    if refine:
        pen = build_pencil(profile, params, l, h / 2.0, R, kappa, xi0)
        fine = _eigenvalues(pen, k)
        vals = (4.0 * fine - coarse) / 3.0
        levels.update(fine=fine, richardson_gap=np.abs(vals - fine))
    else:
        vals = coarse
    funcs, norms = [], []
    for mu_fd in levels.get("fine", coarse):
        y = _eigenvector(pen, mu_fd)
        prof = _to_profile(pen, y, profile.grid, l, params.beta_plus, R)
        funcs.append(prof)
        norms.append(math.sqrt(weighted_inner(prof, prof, profile, params.p)))
    return SpectralResult(l, vals, funcs, np.array(norms), vals < cutoff, cutoff, levels)


def first_eigenfunction_check(result: SpectralResult, profile: Profile, index: int = 0) -> float:
    """|cos| of the U^{p-1}-weighted angle between eigenfunction ``index`` and U."""
    if result.l != 0:
        raise InputError("alignment with U is defined for the radial sector")
    p = float(profile.meta["p"])
    psi = result.eigenfunctions[index]
    num = weighted_inner(psi, profile, profile, p)
    den = math.sqrt(weighted_inner(psi, psi, profile, p) * weighted_inner(profile, profile, profile, p))
    return abs(num) / den


def phi_from_translation(profile: Profile, h: float, params: ModelParams, n_theta: int = 64) -> Profile:
    """Central difference of t -> U o tau_{t e} at t = 0, projected on the l = 1 sector.

    Returns the radial coefficient phi with Phi = phi(rho) cos(theta). The
    exact derivative is 2 U'(rho) (the metric factor at the origin is 2).
    """
    if not 0 < h < 0.5:
        raise InputError("step h must lie in (0, 0.5)")
    grid = profile.grid
    g2 = geo.make_axisym_grid(grid, n_theta)
    s = 2.0 * math.atanh(h)
    theta = np.arccos(np.clip(g2.cos_theta, -1.0, 1.0))
    plus = profile(geo.geodesic_cosine(g2.rho, s, np.pi - theta))  # centre at -h e
    minus = profile(geo.geodesic_cosine(g2.rho, s, theta))  # centre at +h e
    F = (plus - minus) / (2.0 * h)
    num = F @ (g2.wx * g2.x)
    den = np.sum(g2.wx * g2.x**2)
    vals = num / den
    vals[0] = 0.0
    phi = Profile(grid, vals, 1, {"tail_exponent": params.beta_plus, "step": h})
    rq = lambda_norm_sq(phi, params) / weighted_inner(phi, phi, profile, params.p)
    phi.meta["rayleigh_quotient"] = rq
    if abs(rq - params.p) > 0.1 * params.p:
        warnings.warn(f"translation step h={h} too large: Rayleigh quotient {rq:.4g} vs p={params.p}", stacklevel=2)
    return phi
