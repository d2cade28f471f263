"""Deficit, distance to the bubble manifold and dual-norm residuals.

Radial inputs use the 1D spectral-element grid; the optimal bubble centre then
sits on an axis at geodesic offset s and the pairing <u, U_s>_lambda is
computed as int u U_s^p dv (U_s solves the Euler-Lagrange equation).
Axisymmetric inputs (for example translated bubbles) go through
``distance_axisym``, a direct minimisation of the 2D difference norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import geometry as geo
from ._linalg import solve_scaled
from .errors import InequalityViolation, InputError
from .extremal import ModelParams, Profile, concentration_scale, lambda_norm_sq, operator_matrix

__all__ = [
    "StabilityReport",
    "deficit",
    "deficit_sq",
    "cross_term",
    "cross_term_direct",
    "distance_to_manifold",
    "distance_to_solutions",
    "distance_axisym",
    "axisym_norm_sq",
    "radial_on_axisym",
    "h_minus1_norm",
    "el_residual_norm",
    "stability_ratio_scan",
    "euler_lagrange_scan",
    "stability_report",
    "orthogonality_residual",
]


@dataclass(frozen=True)
class StabilityReport:
    deficit: float
    distance: float
    c_star: float
    s_star: float
    ratio: float
    residual_hminus1: float
    flags: dict = field(default_factory=dict)


def _energy(profile: Profile, params: ModelParams) -> float:
    """||U||_lambda^2 = S^{(p+1)/(p-1)}."""
    return lambda_norm_sq(profile, params)


def deficit_sq(u: Profile, S: float, params: ModelParams, quad_tol: float = 1e-11) -> float:
    """||u||^2 - S ||u||_{p+1}^2, clamped to 0 inside the quadrature noise band."""
    if u.l != 0:
        raise InputError("deficit is implemented for radial profiles")
    e = lambda_norm_sq(u, params)
    q = geo.integrate_radial(u.grid, np.abs(u.values) ** (params.p + 1)) ** (2.0 / (params.p + 1))
    d2 = e - S * q
    noise = quad_tol * (abs(e) + S * q)
    if d2 < -10.0 * noise:
        raise InequalityViolation("Poincare-Sobolev inequality violated beyond quadrature noise", value=d2, noise=noise)
    return max(d2, 0.0)


def deficit(u: Profile, S: float, params: ModelParams, quad_tol: float = 1e-11) -> float:
    return math.sqrt(deficit_sq(u, S, params, quad_tol))


def _dcut(profile: Profile, params: ModelParams) -> float:
    rate = params.p * profile.tail_rate - (params.n - 1)
    if rate <= 0:
        raise InputError("U^p is not integrable against the volume growth")
    return min(profile.grid.rho_max, 40.0 / rate)


def cross_term(u: Profile, profile: Profile, s: float, params: ModelParams, c: float = 1.0) -> float:
    """c <u, U_s>_lambda = c int u U_s^p dv, with U_s centred at geodesic offset s."""
    if u.l != 0:
        raise InputError("cross_term expects a radial u")
    s = abs(float(s))
    p = params.p
    if s == 0.0:
        return c * geo.integrate_radial(u.grid, u.values * profile(u.grid.nodes) ** p)
    fp = lambda d: profile(d) ** p  # noqa: E731
    return c * geo.integrate_translated(fp, s, params.n, _dcut(profile, params), g=u.values, outer=u.grid)


def radial_on_axisym(u: Profile, grid2d: geo.AxisymGrid):
    """(values, grad) of a radial profile sampled on an axisymmetric grid built on u.grid."""
    if grid2d.radial is not u.grid:
        raise InputError("grid2d must be built on the profile grid")
    vals = np.broadcast_to(u.values[:, None], grid2d.rho.shape)
    g = np.zeros(grid2d.rho.shape + (2,))
    g[..., 0] = u.nodal_derivative()[:, None]
    return vals, g


def axisym_norm_sq(vals, grad, grid2d: geo.AxisymGrid, lam: float) -> float:
    """int |grad f|^2 - lambda f^2 dv on the 2D grid."""
    return float(np.sum(grid2d.weights * (np.sum(grad * grad, axis=-1) - lam * vals * vals)))


def _axisym_inner(va, ga, vb, gb, grid2d, lam) -> float:
    return float(np.sum(grid2d.weights * (np.sum(ga * gb, axis=-1) - lam * va * vb)))


def cross_term_direct(u: Profile, profile: Profile, s: float, params: ModelParams, grid2d: geo.AxisymGrid) -> float:
    """int grad u . grad U_s - lambda u U_s on the 2D grid (no PDE identity)."""
    from .extremal import translated_bubble_field

    vu, gu = radial_on_axisym(u, grid2d)
    vb, gb = translated_bubble_field(profile, s, grid2d, params)
    return _axisym_inner(vu, gu, vb, gb, grid2d, params.lam)


def _s_candidates(profile: Profile, params: ModelParams, s_max: float) -> np.ndarray:
    L = concentration_scale(float(profile.values[0]), params)
    fine = L * np.array([0.125, 0.25, 0.5, 1.0, 2.0])
    return np.unique(np.concatenate(([0.0], fine[fine < s_max], np.linspace(0.0, s_max, 41)[1:])))


def _best_offset(u: Profile, profile: Profile, params: ModelParams, objective, s_max: float):
    """Maximise objective(C(s)) by a coarse pass then bounded Brent; returns (s*, C(s*), flags)."""
    ss = _s_candidates(profile, params, s_max)
    C = np.array([cross_term(u, profile, s, params) for s in ss])
    vals = objective(C)
    i = int(np.argmax(vals))
    flags = {}
    if i == 0:
        # s = 0 is always critical for radial u; check it is a local maximum
        flags["boundary_optimum"] = True
        return 0.0, float(C[0]), flags
    lo, hi = ss[i - 1], ss[min(i + 1, ss.size - 1)]
    res = minimize_scalar(
        lambda s: -objective(np.array([cross_term(u, profile, s, params)]))[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10 * max(1.0, hi)},
    )
    s_star = float(res.x)
    if -res.fun < vals[i]:
        s_star = float(ss[i])
    if i == ss.size - 1:
        flags["no_bracket"] = True
    return s_star, cross_term(u, profile, s_star, params), flags


def distance_to_manifold(u: Profile, profile: Profile, params: ModelParams, s_max: float = 10.0):
    """inf over c, s of ||u - c U_s||_lambda for radial u.

    Returns (dist, c_star, s_star, flags). With M = ||U||^2 the optimal
    c is C(s)/M and dist^2 = ||u||^2 - C(s*)^2/M.
    """
    M = _energy(profile, params)
    s_star, C, flags = _best_offset(u, profile, params, np.abs, s_max)
    c_star = C / M
    if s_star == 0.0:
        diff = u.with_values(u.values - c_star * profile.values)
        d2 = lambda_norm_sq(diff, params)
    else:
        d2 = lambda_norm_sq(u, params) - C * C / M
    return math.sqrt(max(d2, 0.0)), c_star, s_star, flags


def distance_to_solutions(u: Profile, profile: Profile, params: ModelParams, s_max: float = 10.0):
    """inf over s of ||u - U_s||_lambda (unit coefficient) for radial u; returns (dist, s_star, flags)."""
    M = _energy(profile, params)
    s_star, C, flags = _best_offset(u, profile, params, lambda c: c, s_max)
    if s_star == 0.0:
        d2 = lambda_norm_sq(u.with_values(u.values - profile.values), params)
    else:
        d2 = lambda_norm_sq(u, params) - 2.0 * C + M
    return math.sqrt(max(d2, 0.0)), s_star, flags


def distance_axisym(vals, grad, grid2d: geo.AxisymGrid, profile: Profile, params: ModelParams,
                    s_range=(-3.0, 3.0), free_scale: bool = True, n_scan: int = 61):
    """Direct minimisation of ||f - c U_s|| over signed axial offsets s (and c if free_scale).

    f is given by values and orthonormal-frame gradients on grid2d. The
    difference is formed pointwise, so small distances keep full relative
    accuracy. Returns (dist, c_star, s_star).
    """
    from .extremal import translated_bubble_field

    lam = params.lam

    def obj(s):
        vb, gb = translated_bubble_field(profile, s, grid2d, params)
        if free_scale:
            c = _axisym_inner(vals, grad, vb, gb, grid2d, lam) / axisym_norm_sq(vb, gb, grid2d, lam)
        else:
            c = 1.0
        dv, dg = vals - c * vb, grad - c * gb
        return axisym_norm_sq(dv, dg, grid2d, lam), c

    ss = np.linspace(s_range[0], s_range[1], n_scan)
    f = np.array([obj(s)[0] for s in ss])
    i = int(np.argmin(f))
    lo, hi = ss[max(i - 1, 0)], ss[min(i + 1, n_scan - 1)]
    res = minimize_scalar(lambda s: obj(s)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    s_star = float(res.x) if res.fun <= f[i] else float(ss[i])
    d2, c = obj(s_star)
    return math.sqrt(max(d2, 0.0)), c, s_star


def _solve_operator(grid: geo.RadialGrid, params: ModelParams, rhs: np.ndarray, l: int = 0) -> np.ndarray:
    A = operator_matrix(grid, params, l)
    return solve_scaled(A, rhs, grid.bandwidth)


def h_minus1_norm(f: Profile, params: ModelParams, return_solution: bool = False):
    """Dual norm of v -> int f v dv: solve -Delta phi - lambda phi = f, return ||phi||_lambda."""
    grid = f.grid
    phi_vals = _solve_operator(grid, params, grid.quad_weights * f.values, f.l)
    phi = f.with_values(phi_vals)
    norm = math.sqrt(max(lambda_norm_sq(phi, params), 0.0))
    if return_solution:
        return norm, phi
    return norm


def el_residual_norm(u: Profile, params: ModelParams) -> float:
    """||I'_lambda(u)||_{H^-1} for radial u, with I'(u)v = <u,v>_lambda - int |u|^{p-1} u v."""
    grid = u.grid
    A = operator_matrix(grid, params, u.l)
    load = A @ u.values - grid.quad_weights * np.abs(u.values) ** (params.p - 1) * u.values
    phi = solve_scaled(A, load, grid.bandwidth)
    return math.sqrt(max(grid.omega * float(phi @ (A @ phi)), 0.0))


def _orthogonalise(psi: Profile, profile: Profile, params: ModelParams) -> Profile:
    w = profile.values ** (params.p - 1)
    a = geo.integrate_radial(profile.grid, w * psi.values * profile.values)
    b = geo.integrate_radial(profile.grid, w * profile.values**2)
    return psi.with_values(psi.values - (a / b) * profile.values)


def stability_ratio_scan(perturbation: Profile, epsilons, profile: Profile, params: ModelParams, S: float):
    """Rows (eps, delta, dist, dist^2/delta^2) for u = U + eps * psi, psi projected off U."""
    psi = _orthogonalise(perturbation, profile, params)
    rows = []
    for eps in epsilons:
        u = profile.with_values(profile.values + eps * psi.values)
        if eps == 0:
            rows.append((0.0, 0.0, 0.0, float("nan")))
            continue
        d = deficit(u, S, params)
        dist = distance_to_manifold(u, profile, params)[0]
        rows.append((float(eps), d, dist, dist**2 / d**2 if d > 0 else float("inf")))
    return rows


def euler_lagrange_scan(family, profile: Profile, params: ModelParams, eps0: float = 0.25):
    """Rows (label, dist(u, Z), ||I'(u)||_{H^-1}, ratio, flag) over (label, u) pairs.

    Members outside the energy window (1 +- eps0) ||U||^2 are skipped.
    """
    M = _energy(profile, params)
    rows = []
    for label, u in family:
        if np.any(u.values < 0):
            rows.append((label, float("nan"), float("nan"), float("nan"), "negative"))
            continue
        e = lambda_norm_sq(u, params)
        if not (1 - eps0) * M <= e <= (1 + eps0) * M:
            rows.append((label, float("nan"), float("nan"), float("nan"), "outside_window"))
            continue
        dist = distance_to_solutions(u, profile, params)[0]
        res = el_residual_norm(u, params)
        if dist < 1e-9 and res < 1e-9:
            rows.append((label, dist, res, float("nan"), "trivial"))
        else:
            rows.append((label, dist, res, dist / res, "ok"))
    return rows


def stability_report(u: Profile, profile: Profile, params: ModelParams, S: float) -> StabilityReport:
    d = deficit(u, S, params)
    dist, c, s, flags = distance_to_manifold(u, profile, params)
    return StabilityReport(d, dist, c, s, dist / d if d > 0 else float("nan"), el_residual_norm(u, params), flags)


def orthogonality_residual(u: Profile, profile: Profile, params: ModelParams, c: float, s: float) -> float:
    """|c M - int u U_s^p| / M at a claimed optimum."""
    M = _energy(profile, params)
    return abs(c * M - cross_term(u, profile, s, params)) / M

