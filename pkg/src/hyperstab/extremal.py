"""Ground state of -Delta u - lambda u = u^p on the ball model and the best constant.

The radial profile is found by shooting on the initial height and then
polished by Newton on the spectral-element discretisation, so that the
returned nodal values are an exact discrete critical point. All quadratic
forms include a Robin term at rho_max matched to the decay rate beta_+ of the
linearised equation, which accounts for the tail beyond the grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from . import geometry as geo
from ._linalg import solve_scaled
from .errors import (
    CorruptProfileError,
    InputError,
    IterationLimitError,
    NoBracketError,
    NormalizationError,
    NumericalError,
)

__all__ = [
    "ModelParams",
    "Profile",
    "solve_ground_state",
    "best_constant",
    "lambda_norm_sq",
    "lambda_inner",
    "lp_norm",
    "translated_bubble_values",
    "translated_bubble_field",
    "operator_matrix",
    "ode_residual",
    "default_grid",
    "concentration_scale",
]


@dataclass(frozen=True)
class ModelParams:
    """(n, p, lambda) with hypothesis (H1) checked at construction."""

    n: int
    p: float
    lam: float
    branch: str = field(default="", compare=False)

    def __post_init__(self):
        n, p, lam = self.n, float(self.p), float(self.lam)
        if int(n) != n or n < 3:
            raise InputError("n must be an integer >= 3", n=n)
        pc = (n + 2) / (n - 2)
        bottom = (n - 1) ** 2 / 4.0
        if not (1.0 < p <= pc + 1e-12):
            raise InputError(f"p must lie in (1, {pc:.6g}] for n={n}", p=p)
        critical = abs(p - pc) <= 1e-12
        if critical:
            if n < 4 or not (n * (n - 2) / 4.0 < lam < bottom):
                raise InputError("critical p needs n >= 4 and n(n-2)/4 < lambda < (n-1)^2/4", n=n, lam=lam)
        elif not lam < bottom:
            raise InputError("lambda must be below (n-1)^2/4", lam=lam)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "branch", "critical" if critical else "subcritical")

    @property
    def p_critical(self) -> float:
        return (self.n + 2) / (self.n - 2)

    @property
    def beta_plus(self) -> float:
        """Decay rate of decaying solutions of the linearised radial equation."""
        k = self.n - 1
        return 0.5 * (k + math.sqrt(k * k - 4.0 * self.lam))

    @property
    def beta_minus(self) -> float:
        k = self.n - 1
        return 0.5 * (k - math.sqrt(k * k - 4.0 * self.lam))

    def as_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "lambda": self.lam, "branch": self.branch}


@dataclass(frozen=True, eq=False)
class Profile:
    """Nodal values on a RadialGrid in harmonic sector l, with an exponential tail."""

    grid: geo.RadialGrid
    values: np.ndarray
    l: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise InputError("profile values do not match the grid")
        object.__setattr__(self, "values", v)

    @property
    def tail_rate(self) -> float:
        return float(self.meta.get("tail_exponent", self.grid.n - 1))

    def with_values(self, values, **meta) -> "Profile":
        m = dict(self.meta)
        m.update(meta)
        return replace(self, values=np.asarray(values, dtype=float), meta=m)

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        R = self.grid.rho_max
        inside = rho <= R
        out = np.empty(rho.shape)
        out[inside] = self.grid.interpolate(self.values, rho[inside])
        out[~inside] = self.values[-1] * np.exp(-self.tail_rate * (rho[~inside] - R))
        return out

    def derivative(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        R = self.grid.rho_max
        inside = rho <= R
        out = np.empty(rho.shape)
        per = self.grid.derivative(self.values)
        out[inside] = self.grid.interpolate(None, rho[inside], panel_values=per)
        out[~inside] = -self.tail_rate * self.values[-1] * np.exp(-self.tail_rate * (rho[~inside] - R))
        return out

    def nodal_derivative(self) -> np.ndarray:
        return self.grid.nodal_derivative(self.values)

    # CSV: first line is a header with metadata, then rho,value rows
    def to_csv(self, path, params: ModelParams | None = None) -> None:
        head = {
            "n": self.grid.n,
            "p": params.p if params else self.meta.get("p", ""),
            "lambda": params.lam if params else self.meta.get("lambda", ""),
            "l": self.l,
            "tail_exponent": self.tail_rate,
        }
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"{k}={_fmt(v)}" for k, v in head.items()])
            w.writerow(["rho", "value"])
            for r, v in zip(self.grid.nodes, self.values):
                w.writerow([_fmt(r), _fmt(v)])

    @classmethod
    def from_csv(cls, path, grid: geo.RadialGrid) -> "Profile":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head = dict(item.split("=", 1) for item in rows[0])
        data = np.array([[float(a), float(b)] for a, b in rows[2:]])
        if data.shape[0] != grid.size or not np.allclose(data[:, 0], grid.nodes, rtol=1e-15, atol=1e-15):
            raise InputError("CSV nodes do not match the supplied grid")
        meta = {"tail_exponent": float(head["tail_exponent"])}
        for key in ("p", "lambda"):
            if head.get(key):
                meta[key] = float(head[key])
        return cls(grid, data[:, 1], int(head["l"]), meta)


def _fmt(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def concentration_scale(a: float, params: ModelParams) -> float:
    """Natural length a^{-(p-1)/2} of a profile with height a."""
    return a ** (-(params.p - 1) / 2.0)


def default_grid(params: ModelParams, a: float | None = None, **kw) -> geo.RadialGrid:
    """Grid with geometric grading near 0 when the height a implies a concentrated profile."""
    if a is not None and "core" not in kw:
        L = concentration_scale(a, params)
        if L < 2.0 * kw.get("panel_width", 0.5):
            kw["core"] = L / 2.0
    return geo.make_radial_grid(params.n, **kw)


# ---------------------------------------------------------------------------
# quadratic forms


@lru_cache(maxsize=64)
def _stiffness(grid: geo.RadialGrid, l: int, robin: float) -> np.ndarray:
    K = grid.stiffness(l=l, robin=robin)
    K.setflags(write=False)
    return K


def operator_matrix(grid: geo.RadialGrid, params: ModelParams, l: int = 0) -> np.ndarray:
    """Matrix A with omega * u^T A v = <u, v>_lambda in sector l (omega excluded)."""
    K = _stiffness(grid, l, params.beta_plus)
    return K - params.lam * np.diag(grid.quad_weights)


def lambda_inner(u, v, params: ModelParams) -> float:
    """<u, v>_lambda = int grad u . grad v - lambda u v for same-sector profiles."""
    if u.l != v.l:
        return 0.0
    A = operator_matrix(u.grid, params, u.l)
    return float(u.grid.omega * u.values @ (A @ v.values))


def lambda_norm_sq(u: Profile, params: ModelParams) -> float:
    """||u||_lambda^2 including the angular term l(l+n-2)/sinh^2 for sector l."""
    return lambda_inner(u, u, params)


def lp_norm(u: Profile, q: float) -> float:
    """(int |u|^q dv)^{1/q}."""
    return geo.integrate_radial(u.grid, np.abs(u.values) ** q) ** (1.0 / q)


# ---------------------------------------------------------------------------
# shooting


def _rhs_factory(params: ModelParams):
    n, p, lam = params.n, params.p, params.lam

    def rhs(r, y):
        u, du = y
        return [du, -(n - 1) * du / math.tanh(r) - lam * u - abs(u) ** (p - 1) * u]

    return rhs


def _shoot(a: float, params: ModelParams, rho_end: float, dense: bool = False):
    """Integrate from the series start; returns (kind, solution)."""
    n, p, lam = params.n, params.p, params.lam
    r0 = 1e-4
    c2 = -(lam * a + a**p) / (2 * n)
    y0 = [a + c2 * r0 * r0, 2 * c2 * r0]
    mid = 0.5 * (n - 1)

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1

    def slow_decay(r, y):
        # u'/u rising back above -(n-1)/2 means the slow mode has taken over
        return y[1] + mid * y[0]

    slow_decay.terminal = True
    slow_decay.direction = 1

    def turns_up(r, y):
        return y[1]

    turns_up.terminal = True
    turns_up.direction = 1

    sol = solve_ivp(
        _rhs_factory(params),
        (r0, rho_end),
        y0,
        method="DOP853",
        rtol=1e-13,
        atol=1e-300,
        events=(hit_zero, slow_decay, turns_up),
        dense_output=dense,
    )
    if sol.status == -1:
        raise NumericalError("ODE integration failed", message=sol.message)
    if sol.t_events[0].size:
        return "over", sol
    if sol.t_events[1].size or sol.t_events[2].size:
        return "under", sol
    u, du = sol.y[:, -1]
    return ("under" if du + mid * u > 0 else "over"), sol


def _bracket(params: ModelParams, rho_end: float, a_range: tuple[float, float]):
    lo_lim, hi_lim = a_range
    a = 1.0
    kind, _ = _shoot(a, params, rho_end)
    if kind == "over":
        hi = a
        while True:
            a *= 0.5
            if a < lo_lim:
                raise NoBracketError("no ground state bracket: every height overshoots", a_range=a_range)
            if _shoot(a, params, rho_end)[0] == "under":
                return a, hi
            hi = a
    lo = a
    while True:
        a *= 2.0
        if a > hi_lim:
            raise NoBracketError("no ground state bracket: every height undershoots", a_range=a_range)
        if _shoot(a, params, rho_end)[0] == "over":
            return lo, a
        lo = a


def _fit_exponential(rho: np.ndarray, vals: np.ndarray) -> tuple[float, float]:
    """Least-squares fit vals ~ A exp(-beta rho); returns (beta, A)."""
    slope, icpt = np.polyfit(rho, np.log(vals), 1)
    return -slope, math.exp(icpt)


def ode_residual(profile: Profile, params: ModelParams) -> np.ndarray:
    """Strong residual u'' + (n-1) coth(rho) u' + lambda u + u^p at interior nodes (relative to u(0)^p)."""
    g = profile.grid
    du = g.nodal_derivative(profile.values)
    per = g.derivative(du)
    d2 = np.zeros(g.size)
    cnt = np.zeros(g.size)
    for e, sl in enumerate(g.panel_slices):
        d2[sl] += per[e]
        cnt[sl] += 1.0
    d2 /= cnt
    rho = g.nodes
    u = profile.values
    res = np.empty(g.size)
    res[1:] = d2[1:] + (params.n - 1) * du[1:] / np.tanh(rho[1:]) + params.lam * u[1:] + np.abs(u[1:]) ** params.p
    res[0] = params.n * d2[0] + params.lam * u[0] + u[0] ** params.p
    return res / u[0] ** params.p


def _newton_polish(grid: geo.RadialGrid, params: ModelParams, u: np.ndarray, tol: float = 1e-10, maxit: int = 40):
    A = operator_matrix(grid, params, 0)
    w = grid.quad_weights
    p = params.p
    for it in range(maxit):
        up = np.abs(u) ** (p - 1)
        F = A @ u - w * up * u
        J = A - np.diag(p * w * up)
        du = solve_scaled(J, -F, grid.bandwidth, colscale=u)
        u = u + du
        if np.max(np.abs(du / u)) < tol:
            # one more sweep to land on the roundoff floor
            up = np.abs(u) ** (p - 1)
            J = A - np.diag(p * w * up)
            u = u + solve_scaled(J, -(A @ u - w * up * u), grid.bandwidth, colscale=u)
            return u, it + 2
    raise IterationLimitError("Newton polish did not converge", iterations=maxit)


def solve_ground_state(
    params: ModelParams,
    grid: geo.RadialGrid | None = None,
    tol: float = 1e-8,
    a_range: tuple[float, float] = (1e-8, 1e8),
    bisect_tol: float = 1e-13,
    max_bisect: int = 200,
    polish: bool = True,
) -> Profile:
    """Positive radial decreasing solution by shooting on u(0), then discrete Newton polish."""
    if tol <= 0:
        raise InputError("tol must be positive")
    if grid is not None and grid.n != params.n:
        raise InputError("grid dimension does not match params")
    gap = params.beta_plus - params.beta_minus
    rho_end = min(math.log(1e16) / max(gap, 1e-3) + 10.0, 400.0)

    lo, hi = _bracket(params, rho_end, a_range)
    it = 0
    while hi - lo > bisect_tol * hi:
        if it >= max_bisect:
            raise IterationLimitError("bisection on the initial height hit the iteration cap", lo=lo, hi=hi)
        mid = 0.5 * (lo + hi)
        if _shoot(mid, params, rho_end)[0] == "under":
            lo = mid
        else:
            hi = mid
        it += 1

    if grid is None:
        grid = default_grid(params, a=hi)
    _, s_lo = _shoot(lo, params, rho_end, dense=True)
    _, s_hi = _shoot(hi, params, rho_end, dense=True)
    r_end = min(s_lo.t[-1], s_hi.t[-1], grid.rho_max)
    probe = np.linspace(1e-4, r_end, 4000)
    ul = s_lo.sol(probe)[0]
    uh = s_hi.sol(probe)[0]
    ok = (ul > 0) & (uh > 0) & (np.abs(ul - uh) <= 1e-7 * np.abs(ul))
    bad = np.flatnonzero(~ok)
    r_rel = probe[bad[0] - 1] if bad.size else probe[-1]

    rho = grid.nodes
    vals = np.empty(grid.size)
    inside = rho <= r_rel
    mid_sol = 0.5 * (s_lo.sol(np.maximum(rho[inside], 1e-4))[0] + s_hi.sol(np.maximum(rho[inside], 1e-4))[0])
    vals[inside] = mid_sol
    vals[0] = 0.5 * (lo + hi)
    win = probe[(probe >= max(0.5 * r_rel, r_rel - 3.0)) & (probe <= r_rel)]
    beta_fit, amp = _fit_exponential(win, 0.5 * (s_lo.sol(win)[0] + s_hi.sol(win)[0]))
    vals[~inside] = amp * np.exp(-beta_fit * rho[~inside])

    meta = {
        "p": params.p,
        "lambda": params.lam,
        "a_shoot": 0.5 * (lo + hi),
        "bisections": it,
        "reliable_radius": float(r_rel),
        "shoot_tail_exponent": float(beta_fit),
    }
    if polish:
        vals, nit = _newton_polish(grid, params, vals)
        meta["newton_iterations"] = nit
    if np.any(vals <= 0):
        raise CorruptProfileError("ground state lost positivity")

    # tail exponent fitted on the interior part of the tail
    R = grid.rho_max
    sel = (rho >= 0.5 * R) & (rho <= R - 2.0) & (vals > 1e-280)
    if sel.sum() < 4:
        sel = (rho >= 0.5 * R) & (vals > 1e-280)
    beta_tail, amp_tail = _fit_exponential(rho[sel], vals[sel])
    meta.update(tail_exponent=float(beta_tail), tail_amplitude=float(amp_tail), a=float(vals[0]))
    prof = Profile(grid, vals, 0, meta)
    res = ode_residual(prof, params)
    # the first panel is governed by the series start; check from its right edge on
    interior = (rho >= grid.edges[1]) & (rho <= R - 2.0)
    meta["ode_residual"] = float(np.max(np.abs(res[interior])))
    if meta["ode_residual"] > tol:
        raise NumericalError("ground state ODE residual above tolerance", residual=meta["ode_residual"], tol=tol)
    meta["monotone"] = bool(np.all(np.diff(vals) < 0))
    return prof


def best_constant(profile: Profile, params: ModelParams, tol: float = 1e-6) -> float:
    """S = (int U^{p+1})^{(p-1)/(p+1)} after checking ||U||^2 = int U^{p+1}."""
    p = params.p
    energy = lambda_norm_sq(profile, params)
    mass = geo.integrate_radial(profile.grid, np.abs(profile.values) ** (p + 1))
    resid = abs(energy - mass) / abs(energy)
    profile.meta["consistency"] = resid
    if resid > tol:
        raise NormalizationError("normalization inconsistency: ||U||^2 != int U^{p+1}", residual=resid)
    return mass ** ((p - 1) / (p + 1))


# ---------------------------------------------------------------------------
# translated bubbles on the axisymmetric grid


def translated_bubble_values(profile: Profile, s: float, grid2d: geo.AxisymGrid) -> np.ndarray:
    """U(d(x, c_s)) at the nodes of grid2d; c_s on the axis at geodesic offset s."""
    if profile.l != 0:
        raise InputError("translated bubbles need a radial profile")
    if s == 0:
        return np.broadcast_to(profile.values[:, None], grid2d.rho.shape).copy()
    theta = np.arccos(np.clip(grid2d.cos_theta, -1.0, 1.0))
    d = geo.geodesic_cosine(grid2d.rho, s, theta)
    return profile(d)


def translated_bubble_field(profile: Profile, s: float, grid2d: geo.AxisymGrid, params: ModelParams | None = None):
    """(values, grad) with grad[..., 0] = d/d rho and grad[..., 1] = (1/sinh rho) d/d theta.

    Negative s places the centre on the opposite half of the axis.
    """
    rho = grid2d.rho
    x = grid2d.cos_theta
    sgn = 1.0 if s >= 0 else -1.0
    sa = abs(s)
    xs = sgn * x
    theta = np.arccos(np.clip(xs, -1.0, 1.0))
    d = geo.geodesic_cosine(rho, sa, theta)
    vals = profile(d)
    du = profile.derivative(d)
    sh_d = np.sinh(d)
    small = d < 1e-7
    # U'(d)/sinh d -> U''(0) as d -> 0
    if params is not None:
        u0 = profile.values[0]
        d2_0 = -(params.lam * u0 + u0**params.p) / params.n
    else:
        d2_0 = float(profile.grid.derivative(profile.grid.nodal_derivative(profile.values))[0, 0])
    ratio = np.where(small, d2_0, du / np.where(small, 1.0, sh_d))
    g_rho = ratio * (np.sinh(rho) * math.cosh(sa) - np.cosh(rho) * math.sinh(sa) * xs)
    sin_t = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    g_th = ratio * math.sinh(sa) * sin_t * sgn
    return vals, np.stack([g_rho, g_th], axis=-1)
