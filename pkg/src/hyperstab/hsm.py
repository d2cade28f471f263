"""Hardy-Sobolev-Maz'ya functionals and the lifting to the half-space model.

Points of R^k x R^h are described by r = |y| > 0 and zeta = |z| >= 0; the
half-space model H^n (n = h + 1) uses the same pair with metric
(dr^2 + dz^2)/r^2. The lifting is u = r^{(N-2)/2} v. Half-space integrals are
computed on ball-model polar coordinates about (r, z) = (1, 0), mapped by the
Cayley transform of the totally geodesic (zeta, r) half-plane; the polar axis
theta = 0 is the ray r > 1, zeta = 0, and a bubble at axial offset s sits at
(r, zeta) = (e^s, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry as geo
from .errors import DictionaryInconsistency, InputError
from .extremal import ModelParams, Profile
from .stability import axisym_norm_sq, distance_axisym

__all__ = [
    "CylParams",
    "CylFunction",
    "CylGrid",
    "make_cyl_grid",
    "cyl_grid_for",
    "half_space_grid",
    "lift",
    "lower",
    "hyperbolic_bubble",
    "extremal_cyl",
    "gaussian_bump",
    "compact_bump",
    "verify_identities",
    "cyl_energy",
    "cyl_weighted_lp",
    "hsm_best_constant",
    "hsm_deficit",
    "hsm_distance",
    "isometry_check",
]


@dataclass(frozen=True)
class CylParams:
    N: int
    k: int
    mu: float
    p: float

    def __post_init__(self):
        N, k, mu, p = self.N, self.k, float(self.mu), float(self.p)
        if int(N) != N or int(k) != k or N < 5 or not 3 <= k < N or N - k < 2:
            raise InputError("need N >= 5, 3 <= k < N and h = N - k >= 2", N=N, k=k)
        if not 0 <= mu < (k - 2) ** 2 / 4:
            raise InputError("need 0 <= mu < (k-2)^2/4", mu=mu)
        if not 1 < p <= (N + 2) / (N - 2) + 1e-12:
            raise InputError("need 1 < p <= (N+2)/(N-2)", p=p)
        n = N - k + 1
        if not self.lam < (n - 1) ** 2 / 4 or not p < (n + 2) / (n - 2):
            raise DictionaryInconsistency("dictionary leaves the admissible range")

    @property
    def h(self) -> int:
        return self.N - self.k

    @property
    def n(self) -> int:
        return self.h + 1

    @property
    def lam(self) -> float:
        return self.mu + ((self.n - 1) ** 2 - (self.k - 2) ** 2) / 4

    @property
    def t(self) -> float:
        return self.N - (self.N - 2) * (self.p + 1) / 2

    @property
    def omega_k(self) -> float:
        return geo.sphere_measure(self.k)

    @property
    def lift_exponent(self) -> float:
        return (self.N - 2) / 2

    @property
    def model(self) -> ModelParams:
        return ModelParams(self.n, self.p, self.lam)

    def as_dict(self) -> dict:
        return {"N": self.N, "k": self.k, "h": self.h, "mu": self.mu, "p": self.p, "t": self.t,
                "n": self.n, "lambda": self.lam, "omega_k": self.omega_k}


@dataclass(frozen=True)
class CylFunction:
    """f(r, zeta) with partial derivatives, all vectorised callables."""

    value: Callable
    d_r: Callable
    d_zeta: Callable

    def __call__(self, r, z):
        return self.value(r, z)

    def scaled(self, c: float) -> "CylFunction":
        return CylFunction(lambda r, z: c * self.value(r, z), lambda r, z: c * self.d_r(r, z),
                           lambda r, z: c * self.d_zeta(r, z))

    def minus(self, other: "CylFunction") -> "CylFunction":
        return CylFunction(lambda r, z: self.value(r, z) - other.value(r, z),
                           lambda r, z: self.d_r(r, z) - other.d_r(r, z),
                           lambda r, z: self.d_zeta(r, z) - other.d_zeta(r, z))


def _power_twist(f: CylFunction, a: float) -> CylFunction:
    """r^a f."""
    return CylFunction(
        lambda r, z: r**a * f.value(r, z),
        lambda r, z: a * r ** (a - 1) * f.value(r, z) + r**a * f.d_r(r, z),
        lambda r, z: r**a * f.d_zeta(r, z),
    )


def lift(v: CylFunction, cp: CylParams) -> CylFunction:
    """Cylindrical function -> half-space function u = r^{(N-2)/2} v."""
    return _power_twist(v, cp.lift_exponent)


def lower(u: CylFunction, cp: CylParams) -> CylFunction:
    """Half-space function -> cylindrical function v = r^{-(N-2)/2} u."""
    return _power_twist(u, -cp.lift_exponent)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class CylGrid:
    """Tensor Gauss-Legendre grid in (log r, asinh zeta); ``w`` is the plain dr dzeta weight."""

    r: np.ndarray
    z: np.ndarray
    w: np.ndarray


def _composite(lo, hi, width, order):
    x, wx = np.polynomial.legendre.leggauss(order)
    m = max(1, int(math.ceil((hi - lo) / width)))
    e = np.linspace(lo, hi, m + 1)
    mid, half = 0.5 * (e[:-1] + e[1:]), 0.5 * np.diff(e)
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * wx).ravel()


def make_cyl_grid(log_r=(-12.0, 12.0), asinh_z=(0.0, 12.0), width: float = 0.5, order: int = 12) -> CylGrid:
    a, wa = _composite(*log_r, width, order)
    b, wb = _composite(*asinh_z, width, order)
    r = np.exp(a)
    z = np.sinh(b)
    R, Z = np.meshgrid(r, z, indexing="ij")
    W = (wa * r)[:, None] * (wb * np.cosh(b))[None, :]
    return CylGrid(R, Z, W)


def cyl_grid_for(cp: CylParams, **kw) -> CylGrid:
    """Grid wide enough for lowered bubbles: they decay like r^{+-g} and zeta^{-g}, g = sqrt((k-2)^2 - 4 mu)."""
    g = math.sqrt((cp.k - 2) ** 2 - 4 * cp.mu)
    L = min(80.0, 40.0 / g + 4.0)
    return make_cyl_grid((-L, L), (0.0, L), **kw)


def half_space_grid(n: int, rho_max: float = 30.0, n_theta: int = 192, **kw):
    """Ball-model polar grid about (1, 0) with its Cayley images (r, zeta) and Jacobian pieces."""
    rg = geo.make_radial_grid(n, rho_max=rho_max, **kw)
    g2 = geo.make_axisym_grid(rg, n_theta)
    rho, x = g2.rho, g2.cos_theta
    th = np.arccos(np.clip(x, -1.0, 1.0))
    t = np.tanh(rho / 2)
    w = t * np.exp(1j * th)
    Zc = 1j * (1 + w) / (1 - w)
    dZ = 2j / (1 - w) ** 2
    w_rho = 0.5 / np.cosh(rho / 2) ** 2 * np.exp(1j * th)
    w_th = 1j * w
    Z_rho, Z_th = dZ * w_rho, dZ * w_th
    # x-coordinate of the half-plane is -zeta on theta in [0, pi]
    geom = {
        "r": Zc.imag, "zeta": np.abs(Zc.real),
        "r_rho": Z_rho.imag, "z_rho": -Z_rho.real,
        "r_th": Z_th.imag, "z_th": -Z_th.real,
    }
    return g2, geom


def _half_space_fields(f: CylFunction, g2: geo.AxisymGrid, geom):
    """(values, orthonormal-frame gradient) of a half-space function on the polar grid."""
    r, z = geom["r"], geom["zeta"]
    fr, fz = f.d_r(r, z), f.d_zeta(r, z)
    g_rho = fr * geom["r_rho"] + fz * geom["z_rho"]
    g_th = fr * geom["r_th"] + fz * geom["z_th"]
    sh = np.sinh(g2.rho)
    grad = np.stack([g_rho, np.where(sh > 0, g_th / np.where(sh > 0, sh, 1.0), 0.0)], axis=-1)
    return f.value(r, z), grad


# ---------------------------------------------------------------------------
# functions


def hyperbolic_bubble(profile: Profile, params: ModelParams, c: float = 1.0) -> CylFunction:
    """U(d((r, zeta), (c, 0))) on the half space, with cosh d = (r^2 + zeta^2 + c^2)/(2 r c)."""
    u0 = float(profile.values[0])
    d2_0 = -(params.lam * u0 + u0**params.p) / params.n

    def dist(r, z):
        X = (r * r + z * z + c * c) / (2 * r * c)
        # acosh(X) = 2 asinh(sqrt((X - 1)/2)), stable near X = 1
        q = ((r - c) ** 2 + z * z) / (4 * r * c)
        return 2 * np.arcsinh(np.sqrt(q)), X

    def ratio(d):
        small = d < 1e-7
        return np.where(small, d2_0, profile.derivative(d) / np.where(small, 1.0, np.sinh(d)))

    def val(r, z):
        return profile(dist(r, z)[0])

    def dr(r, z):
        d, _ = dist(r, z)
        return ratio(d) * (r * r - z * z - c * c) / (2 * r * r * c)

    def dz(r, z):
        d, _ = dist(r, z)
        return ratio(d) * z / (r * c)

    return CylFunction(val, dr, dz)


def extremal_cyl(profile: Profile, cp: CylParams, R: float = 1.0) -> CylFunction:
    """V_R(y, z) = R^{(N-2)/2} V(R y, R z), the lowered bubble centred at (1/R, 0)."""
    return lower(hyperbolic_bubble(profile, cp.model, 1.0 / R), cp)


def gaussian_bump(a: float, sr: float, sz: float, c: float = 0.0, amp: float = 1.0) -> CylFunction:
    """amp (1 + c zeta^2) exp(-(log r - a)^2/(2 sr^2) - zeta^2/(2 sz^2)): smooth in (y, z)."""

    def core(r, z):
        return amp * np.exp(-((np.log(r) - a) ** 2) / (2 * sr * sr) - z * z / (2 * sz * sz))

    def val(r, z):
        return (1 + c * z * z) * core(r, z)

    def dr(r, z):
        return -(np.log(r) - a) / (sr * sr * r) * val(r, z)

    def dz(r, z):
        return (2 * c * z - (1 + c * z * z) * z / (sz * sz)) * core(r, z)

    return CylFunction(val, dr, dz)


def compact_bump(a: float, b: float, width: float) -> CylFunction:
    """exp(-1/(1 - q)) with q = ((log r - a)^2 + (zeta - b)^2)/width^2; needs b > width."""
    if not b > width:
        raise InputError("support must stay away from zeta = 0")

    def q(r, z):
        return ((np.log(r) - a) ** 2 + (z - b) ** 2) / width**2

    def val(r, z):
        qq = q(r, z)
        inside = qq < 1
        return np.where(inside, np.exp(-1 / np.where(inside, 1 - qq, 1.0)), 0.0)

    def dq_fac(r, z):
        qq = q(r, z)
        inside = qq < 1
        return np.where(inside, -val(r, z) / np.where(inside, (1 - qq) ** 2, 1.0), 0.0)

    def dr(r, z):
        return dq_fac(r, z) * 2 * (np.log(r) - a) / (width**2 * r)

    def dz(r, z):
        return dq_fac(r, z) * 2 * (z - b) / width**2

    return CylFunction(val, dr, dz)


# ---------------------------------------------------------------------------
# integrals


def _cyl_measure(grid: CylGrid, cp: CylParams):
    """omega_k r^{k-1} omega_h zeta^{h-1} dr dzeta."""
    return cp.omega_k * geo.sphere_measure(cp.h) * grid.w * grid.r ** (cp.k - 1) * grid.z ** (cp.h - 1)


def cyl_energy(v: CylFunction, cp: CylParams, grid: CylGrid, w: CylFunction | None = None) -> float:
    """int grad v . grad w - mu v w / |y|^2 over R^k x R^h."""
    w = v if w is None else w
    r, z = grid.r, grid.z
    dens = v.d_r(r, z) * w.d_r(r, z) + v.d_zeta(r, z) * w.d_zeta(r, z) - cp.mu * v(r, z) * w(r, z) / r**2
    return float(np.sum(_cyl_measure(grid, cp) * dens))


def cyl_weighted_lp(v: CylFunction, cp: CylParams, grid: CylGrid) -> float:
    """int |v|^{p+1} / |y|^t."""
    r, z = grid.r, grid.z
    return float(np.sum(_cyl_measure(grid, cp) * np.abs(v(r, z)) ** (cp.p + 1) / r**cp.t))


def _cyl_identity_terms(phi: CylFunction, psi: CylFunction, cp: CylParams, grid: CylGrid):
    """(1/omega_k) times the three cylindrical integrals for T(phi), T(psi)."""
    a, b = lower(phi, cp), lower(psi, cp)
    r, z = grid.r, grid.z
    m = _cyl_measure(grid, cp) / cp.omega_k
    av, bv = a(r, z), b(r, z)
    i1 = np.sum(m * av * bv / r**2)
    i2 = np.sum(m * np.abs(av) ** (cp.p - 1) * av * bv / r**cp.t)
    i3 = np.sum(m * (a.d_r(r, z) * b.d_r(r, z) + a.d_zeta(r, z) * b.d_zeta(r, z)))
    return float(i1), float(i2), float(i3)


def _hyp_identity_terms(phi: CylFunction, psi: CylFunction, cp: CylParams, g2, geom):
    r, z = geom["r"], geom["zeta"]
    w = g2.weights
    pv, qv = phi(r, z), psi(r, z)
    j1 = np.sum(w * pv * qv)
    j2 = np.sum(w * np.abs(pv) ** (cp.p - 1) * pv * qv)
    grad = r * r * (phi.d_r(r, z) * psi.d_r(r, z) + phi.d_zeta(r, z) * psi.d_zeta(r, z))
    shift = (cp.h**2 - (cp.k - 2) ** 2) / 4
    j3 = np.sum(w * (grad - shift * pv * qv))
    return float(j1), float(j2), float(j3)


def verify_identities(phi: CylFunction, psi: CylFunction, cp: CylParams, grid: CylGrid | None = None,
                      half_space=None):
    """Relative residuals of the three lifting identities for half-space test functions phi, psi.

    Left sides are cylindrical integrals of T(phi) = r^{-(N-2)/2} phi on the
    (log r, asinh zeta) grid; right sides are hyperbolic integrals on the
    polar grid about (1, 0). Returns (residuals, lhs, rhs).
    """
    grid = make_cyl_grid() if grid is None else grid
    g2, geom = half_space_grid(cp.n) if half_space is None else half_space
    lhs = _cyl_identity_terms(phi, psi, cp, grid)
    rhs = _hyp_identity_terms(phi, psi, cp, g2, geom)
    res = tuple(abs(a - b) / abs(b) if b != 0 else abs(a) for a, b in zip(lhs, rhs))
    return res, lhs, rhs


def hsm_best_constant(S_lambda: float, cp: CylParams) -> float:
    """S_HSM = omega_k^{(p-1)/(p+1)} S_lambda (energies scale by omega_k)."""
    return cp.omega_k ** ((cp.p - 1) / (cp.p + 1)) * S_lambda


def _hyp_energy_and_lp(u: CylFunction, cp: CylParams, g2, geom):
    v, grad = _half_space_fields(u, g2, geom)
    e = axisym_norm_sq(v, grad, g2, cp.lam)
    q = float(np.sum(g2.weights * np.abs(v) ** (cp.p + 1)))
    return e, q


def hsm_deficit(v: CylFunction, cp: CylParams, S_lambda: float, grid: CylGrid | None = None, half_space=None,
                tol: float = 1e-4):
    """Squared HSM deficit by two routes; returns (delta_mu, report).

    Route 1 integrates in cylindrical coordinates with S_HSM; route 2 lifts
    to H^n, takes the lambda-deficit there and multiplies by omega_k. The
    returned value is the lifted route. Disagreement beyond ``tol`` relative
    to the cylindrical energy raises DictionaryInconsistency.
    """
    grid = cyl_grid_for(cp) if grid is None else grid
    g2, geom = half_space_grid(cp.n) if half_space is None else half_space
    p = cp.p
    e_cyl = cyl_energy(v, cp, grid)
    d2_cyl = e_cyl - hsm_best_constant(S_lambda, cp) * cyl_weighted_lp(v, cp, grid) ** (2 / (p + 1))
    e_h, q_h = _hyp_energy_and_lp(lift(v, cp), cp, g2, geom)
    d2_hyp = e_h - S_lambda * q_h ** (2 / (p + 1))
    d2_lift = cp.omega_k * d2_hyp
    disc = abs(d2_cyl - d2_lift) / abs(e_cyl)
    report = {"delta_sq_cylindrical": d2_cyl, "delta_sq_lambda": d2_hyp, "delta_sq_lifted": d2_lift,
              "energy_cylindrical": e_cyl, "energy_lambda": e_h, "route_discrepancy": disc}
    if disc > tol:
        raise DictionaryInconsistency("deficit routes disagree", **report)
    return math.sqrt(max(d2_lift, 0.0)), report


def hsm_distance(v: CylFunction, cp: CylParams, profile: Profile, half_space=None, s_range=(-4.0, 4.0)):
    """dist(v, Z~_0) through the lifting: sqrt(omega_k) times the half-space distance.

    For v symmetric about z = 0 the optimal V_{R, z0} has z0 = 0, which on
    the half space is a bubble on the polar axis at offset s = -log R.
    Returns (dist, c_star, R_star).
    """
    g2, geom = half_space_grid(cp.n) if half_space is None else half_space
    if g2.n != profile.grid.n:
        raise InputError("profile dimension does not match the dictionary")
    u = lift(v, cp)
    vals, grad = _half_space_fields(u, g2, geom)
    d, c, s = distance_axisym(vals, grad, g2, profile, cp.model, s_range=s_range)
    return math.sqrt(cp.omega_k) * d, c, math.exp(-s)


def isometry_check(v: CylFunction, cp: CylParams, profile: Profile, R: float = 1.0, c: float = 1.0,
                   grid: CylGrid | None = None, half_space=None):
    """(||v - c V_R||_mu^2, omega_k ||lift(v) - c U_s||_lambda^2) computed independently."""
    grid = cyl_grid_for(cp) if grid is None else grid
    g2, geom = half_space_grid(cp.n) if half_space is None else half_space
    diff = v.minus(extremal_cyl(profile, cp, R).scaled(c))
    lhs = cyl_energy(diff, cp, grid)
    udiff = lift(v, cp).minus(hyperbolic_bubble(profile, cp.model, 1.0 / R).scaled(c))
    vals, grad = _half_space_fields(udiff, g2, geom)
    return lhs, cp.omega_k * axisym_norm_sq(vals, grad, g2, cp.lam)
