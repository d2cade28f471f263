"""Radial fast diffusion u_t = Delta u^m on hyperbolic space.

Rescaled form: d_tau w^p = Delta w + w^p, whose stationary state is the
lambda = 0 ground state U with p = 1/m. Both forms are advanced by backward
Euler on the spectral-element grid with Newton iterations on band storage;
the far boundary carries the Robin condition w' = -(n-1) w of the tail.

Time dictionary used throughout (with A = ((1-m)(T-t))^{1/(1-m)}):
u = A w^p, tau = ln(T/(T-t))/(1-m).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import geometry as geo
from ._linalg import solve_band_scaled, to_banded
from .errors import BudgetError, InputError, PositivityLoss, StepFailure
from .extremal import ModelParams, Profile, _fmt
from .stability import el_residual_norm

__all__ = [
    "FlowParams",
    "FlowTrace",
    "OriginalTrace",
    "rescaled_step",
    "energy",
    "entropy",
    "relative_error_sup",
    "lp_distance",
    "dissipation_check",
    "run_rescaled_flow",
    "calibrate_amplitude",
    "run_original_flow",
    "map_to_rescaled",
    "separable_initial_data",
    "rescaled_initial_data",
    "fit_rate",
    "benilan_crandall_check",
    "smoothing_diagnostic",
]


@dataclass(frozen=True, eq=False)
class FlowParams:
    n: int
    m: float
    dt: float
    grid: geo.RadialGrid
    floor: float = 1e-300
    T_hint: float | None = None
    semi_implicit: bool = False
    newton_tol: float = 1e-12
    max_newton: int = 50

    def __post_init__(self):
        ms = (self.n - 2) / (self.n + 2)
        if not ms < self.m < 1:
            raise InputError(f"need m in ({ms:.6g}, 1), got {self.m}")
        if not 0 < self.dt < 1:
            raise InputError("dt must lie in (0, 1)")
        if self.grid.n != self.n:
            raise InputError("grid dimension does not match n")

    @property
    def p(self) -> float:
        return 1.0 / self.m

    @property
    def model(self) -> ModelParams:
        return ModelParams(self.n, self.p, 0.0)

    @property
    def rate_claims_valid(self) -> bool:
        return 3 <= self.n <= 5 and self.m < 0.5

    def with_dt(self, dt: float) -> "FlowParams":
        return FlowParams(self.n, self.m, dt, self.grid, self.floor, self.T_hint, self.semi_implicit,
                          self.newton_tol, self.max_newton)


COLUMNS = ("tau", "energy", "entropy", "sup_rel_error", "residual_hminus1", "mass")


@dataclass(eq=False)
class FlowTrace:
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[COLUMNS.index(name)] for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(v) for v in r])


@dataclass(eq=False)
class OriginalTrace:
    t: np.ndarray
    sup: np.ndarray
    states: list
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t", "sup_u"))
            for a, b in zip(self.t, self.sup):
                w.writerow((_fmt(a), _fmt(b)))


_BAND_CACHE: dict = {}


def _stiffness_band(grid: geo.RadialGrid) -> np.ndarray:
    key = id(grid)
    hit = _BAND_CACHE.get(key)
    if hit is None or hit[0] is not grid:
        K = grid.stiffness(0, robin=float(grid.n - 1))
        hit = (grid, K, to_banded(K, grid.bandwidth))
        _BAND_CACHE[key] = hit
    return hit[1], hit[2]


def _newton(resid, jac_diag, K, Kb, w0, fp: FlowParams, dt_k: float):
    """Solve resid(w) = 0 with Jacobian dt K + diag(jac_diag(w)) by damped Newton."""
    bw = fp.grid.bandwidth
    w = w0.copy()
    for it in range(fp.max_newton):
        F = resid(w)
        ab = dt_k * Kb
        ab[bw] = ab[bw] + jac_diag(w)
        dw = solve_band_scaled(ab, -F, bw, colscale=w)
        step = 1.0
        for _ in range(40):
            trial = w + step * dw
            if np.all(trial > fp.floor):
                break
            step *= 0.5
        else:
            raise PositivityLoss("Newton iterate left the positive cone")
        w = trial
        if np.max(np.abs(step * dw) / w) < fp.newton_tol:
            return w, it + 1
    raise StepFailure("Newton did not converge", iterations=fp.max_newton)


def rescaled_step(w: Profile, fp: FlowParams, dt: float | None = None) -> Profile:
    """One backward-Euler step of d_tau w^p = Delta w + w^p."""
    dt = fp.dt if dt is None else dt
    if np.any(w.values <= 0):
        raise InputError("rescaled_step needs w > 0 on the grid")
    K, Kb = _stiffness_band(fp.grid)
    W = fp.grid.quad_weights
    p = fp.p
    wp_old = w.values**p
    if fp.semi_implicit:
        def resid(v):
            return W * (v**p - wp_old) + dt * (K @ v) - dt * W * wp_old

        def jd(v):
            return W * p * v ** (p - 1)
    else:
        def resid(v):
            return W * ((1.0 - dt) * v**p - wp_old) + dt * (K @ v)

        def jd(v):
            return (1.0 - dt) * W * p * v ** (p - 1)

    vals, its = _newton(resid, jd, K, Kb, w.values, fp, dt)
    return w.with_values(vals, newton_iterations=its)


def _stiff_energy(w: Profile, grid: geo.RadialGrid) -> float:
    K, _ = _stiffness_band(grid)
    return float(grid.omega * w.values @ (K @ w.values))


def energy(w: Profile, p: float | None = None) -> float:
    """I_0(w) = 1/2 int |grad w|^2 - 1/(p+1) int |w|^{p+1}."""
    p = float(w.meta["p"]) if p is None else p
    grad = _stiff_energy(w, w.grid)
    return 0.5 * grad - geo.integrate_radial(w.grid, np.abs(w.values) ** (p + 1)) / (p + 1)


def entropy(w: Profile, profile: Profile, p: float | None = None) -> float:
    """E[w] = int (w - U)^2 U^{p-1} dv."""
    p = float(profile.meta["p"]) if p is None else p
    return geo.integrate_radial(w.grid, (w.values - profile.values) ** 2 * profile.values ** (p - 1))


def lp_distance(w: Profile, profile: Profile, p: float | None = None) -> float:
    """int |w - U|^{p+1} dv."""
    p = float(profile.meta["p"]) if p is None else p
    return geo.integrate_radial(w.grid, np.abs(w.values - profile.values) ** (p + 1))


def relative_error_sup(w: Profile, profile: Profile, rho=None) -> float:
    """max |w/U - 1| over grid nodes (or given radii, with tail extensions beyond the grid)."""
    if rho is None:
        return float(np.max(np.abs(w.values / profile.values - 1.0)))
    rho = np.asarray(rho, dtype=float)
    return float(np.max(np.abs(w(rho) / profile(rho) - 1.0)))


def _drift(w: Profile, p: float) -> np.ndarray:
    """Nodal Delta w + w^p with the lumped weak Laplacian."""
    K, _ = _stiffness_band(w.grid)
    W = w.grid.quad_weights
    out = np.zeros_like(w.values)
    pos = W > 0  # the origin carries no weight
    out[pos] = -(K @ w.values)[pos] / W[pos] + w.values[pos] ** p
    return out


def dissipation_check(w: Profile, w_next: Profile, fp: FlowParams, dt: float | None = None):
    """Compare (I_0(w+) - I_0(w))/dt with -(1/p) int (Delta w + w^p)^2 / w^{p-1} at the midpoint.

    Returns (discrete rate, analytic rate, relative residual).
    """
    dt = fp.dt if dt is None else dt
    p = fp.p
    lhs = (energy(w_next, p) - energy(w, p)) / dt
    mid = w.with_values(0.5 * (w.values + w_next.values))
    g = _drift(mid, p)
    rhs = -geo.integrate_radial(w.grid, g * g / mid.values ** (p - 1)) / p
    scale = max(abs(rhs), abs(lhs), 1e-300)
    return lhs, rhs, abs(lhs - rhs) / scale


def _row(tau, w: Profile, profile: Profile, fp: FlowParams):
    p = fp.p
    return (
        float(tau),
        energy(w, p),
        entropy(w, profile, p),
        relative_error_sup(w, profile),
        el_residual_norm(w, fp.model),
        geo.integrate_radial(w.grid, w.values ** (p + 1)),
    )


def _projection(w: Profile, profile: Profile, p: float) -> float:
    """Weighted coefficient of w - U along U (the unstable direction)."""
    wt = profile.values ** (p - 1)
    num = geo.integrate_radial(w.grid, wt * (w.values - profile.values) * profile.values)
    den = geo.integrate_radial(w.grid, wt * profile.values**2)
    return num / den


def run_rescaled_flow(w0: Profile, fp: FlowParams, tau_end: float, profile: Profile,
                      store_states: bool = True, diagnostics: bool = True, stop_projection: float | None = None) -> FlowTrace:
    """Backward-Euler run of the rescaled flow with per-step halving on failure.

    Failures that survive five halvings abort the run; the partial trace is
    returned with meta['aborted'] set.
    """
    p = fp.p
    w = w0.with_values(w0.values.copy(), p=p)
    trace = FlowTrace(meta={"dt": fp.dt, "m": fp.m, "n": fp.n, "aborted": None, "monotone": True})
    tau = 0.0
    if diagnostics:
        trace.rows.append(_row(tau, w, profile, fp))
    if store_states:
        trace.states.append(w.values.copy())
    e_prev = energy(w, p)
    worst_rise = 0.0
    while tau < tau_end - 1e-12:
        dt = min(fp.dt, tau_end - tau)
        for _ in range(6):
            try:
                w_new = rescaled_step(w, fp, dt)
                break
            except (StepFailure, PositivityLoss) as exc:
                dt *= 0.5
                err = exc
        else:
            trace.meta["aborted"] = getattr(err, "code", "step_failure")
            break
        tau += dt
        w = w_new.with_values(w_new.values, p=p)
        e_new = energy(w, p)
        rise = e_new - e_prev
        worst_rise = max(worst_rise, rise / max(abs(e_prev), 1e-300))
        e_prev = e_new
        if diagnostics:
            trace.rows.append(_row(tau, w, profile, fp))
        if store_states:
            trace.states.append(w.values.copy())
        if stop_projection is not None and abs(_projection(w, profile, p)) > stop_projection:
            trace.meta["stopped"] = tau
            break
    trace.meta["max_relative_energy_rise"] = worst_rise
    trace.meta["monotone"] = worst_rise <= 10 * fp.newton_tol
    trace.meta["final"] = w
    return trace


def calibrate_amplitude(shape: Profile, profile: Profile, fp: FlowParams, tau_checks=(8.0, 16.0, 24.0),
                        rel_width: float = 0.3):
    """Scale kappa so that w0 = kappa * shape converges to U.

    The direction of U itself is unstable for the rescaled flow (growth rate
    (p-1)/p); it encodes the extinction time. kappa is found by Brent on the
    weighted projection of w(tau_c) - U on U, for increasing tau_c.
    """
    p = fp.p
    wt = profile.values ** (p - 1)
    k0 = geo.integrate_radial(shape.grid, wt * shape.values * profile.values) / geo.integrate_radial(
        shape.grid, wt * shape.values**2)
    lo, hi = k0 * (1 - rel_width), k0 * (1 + rel_width)
    root = k0
    for tc in tau_checks:
        def g(k):
            tr = run_rescaled_flow(shape.with_values(k * shape.values), fp, tc, profile, store_states=False,
                                   diagnostics=False, stop_projection=0.5)
            return _projection(tr.meta["final"], profile, p)

        glo, ghi = g(lo), g(hi)
        if glo * ghi > 0:
            raise BudgetError("amplitude calibration lost its bracket", tau_check=tc)
        root = brentq(g, lo, hi, xtol=1e-15 * abs(root), rtol=1e-15, maxiter=200)
        # the projection grows like exp((p-1)tau/p): shrink the bracket accordingly
        width = max(abs(hi - lo) * math.exp(-(p - 1) / p * tc) * 50.0, 64 * np.finfo(float).eps * abs(root))
        lo, hi = root - width, root + width
    return root


def fit_rate(tau, values, frac: float = 0.5):
    """Exponential decay rate from a least-squares fit of log(values) on the last ``frac`` of the trace.

    Returns (rate, jackknife standard error).
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = tau >= tau[0] + (1 - frac) * (tau[-1] - tau[0])
    t, y = tau[keep], y[keep]
    ok = y > 0
    t, ly = t[ok], np.log(y[ok])
    if t.size < 3:
        return float("nan"), float("nan")
    slope = np.polyfit(t, ly, 1)[0]
    k = t.size
    jk = np.array([np.polyfit(np.delete(t, i), np.delete(ly, i), 1)[0] for i in range(k)])
    err = math.sqrt((k - 1) / k * np.sum((jk - jk.mean()) ** 2))
    return float(-slope), float(err)


def benilan_crandall_check(trace: FlowTrace, fp: FlowParams, profile: Profile) -> float:
    """max over nodes and steps of d_tau v - 2m (v + 1) for tau >= ln 2/(1-m), v = w/U - 1.

    The bound follows from u_t <= u/((1-m) t) under the dictionary above.
    """
    tau = trace.column("tau")
    start = math.log(2.0) / (1.0 - fp.m)
    worst = -np.inf
    for k in range(1, len(trace.states)):
        if tau[k - 1] < start:
            continue
        v0 = trace.states[k - 1] / profile.values - 1.0
        v1 = trace.states[k] / profile.values - 1.0
        dv = (v1 - v0) / (tau[k] - tau[k - 1])
        worst = max(worst, float(np.max(dv - 2.0 * fp.m * (v1 + 1.0))))
    return worst


def smoothing_diagnostic(trace: FlowTrace, frac: float = 0.5, floor: float = 1e-13) -> dict:
    """Fitted decay rates of sup|v|, E and the L^{p+1} gap, with the sup-vs-entropy envelope."""
    tau = trace.column("tau")
    sup = trace.column("sup_rel_error")
    ent = trace.column("entropy")
    rep = {"stationary": bool(np.max(sup) < floor)}
    if rep["stationary"]:
        rep.update(sup_rate=float("nan"), flag="rate_undefined")
        return rep
    rs, es = fit_rate(tau, sup, frac)
    re, ee = fit_rate(tau, ent, frac)
    rep.update(sup_rate=rs, sup_rate_err=es, entropy_rate=re, entropy_rate_err=ee)
    kbar = rs / re if re > 0 else float("nan")
    rep["kappa_bar_fit"] = kbar
    keep = (ent > 0) & (sup > 0)
    if np.isfinite(kbar) and keep.any():
        rep["envelope"] = float(np.max(sup[keep] / ent[keep] ** kbar))
    return rep


# ---------------------------------------------------------------------------
# original time


def separable_initial_data(profile: Profile, m: float, T: float) -> Profile:
    """u0 = ((1-m) T)^{1/(1-m)} U^{1/m}."""
    return profile.with_values(((1 - m) * T) ** (1 / (1 - m)) * profile.values ** (1 / m))


def rescaled_initial_data(u0: Profile, m: float, T: float) -> Profile:
    """w0 = ((1-m) T)^{-m/(1-m)} u0^m."""
    return u0.with_values(((1 - m) * T) ** (-m / (1 - m)) * u0.values**m)


def run_original_flow(u0: Profile, fp: FlowParams, threshold: float = 1e-6, frac: float = 0.01,
                      max_steps: int = 20000, dt0: float | None = None, fit_points: int = 60):
    """Backward Euler for d_t q^p = Delta q with q = u^m, until sup u < threshold * sup u0.

    The step follows the remaining lifetime, dt = frac * (T_est - t); T is
    extrapolated from the linear law sup(u)^{1-m} ~ (T - t).
    Returns (T_estimate, OriginalTrace).
    """
    m, p = fp.m, fp.p
    if np.any(u0.values <= 0):
        raise InputError("u0 must be positive")
    K, Kb = _stiffness_band(fp.grid)
    W = fp.grid.quad_weights
    q = u0.values**m
    u_max0 = float(np.max(u0.values))
    t = 0.0
    ts, sups, states = [0.0], [u_max0], [q.copy()]
    dt = (dt0 if dt0 is not None else (fp.T_hint * frac if fp.T_hint else 1e-3))
    for _ in range(max_steps):
        qp_old = q**p

        def resid(v):
            return W * (v**p - qp_old) + dt * (K @ v)

        def jd(v):
            return W * p * v ** (p - 1)

        q_new, _ = _newton(resid, jd, K, Kb, q, fp, dt)
        t += dt
        q = q_new
        s = float(np.max(q)) ** p
        ts.append(t)
        sups.append(s)
        states.append(q.copy())
        if s < threshold * u_max0:
            break
        # remaining life from the last two points of sup^{1-m}
        z0, z1 = sups[-2] ** (1 - m), s ** (1 - m)
        slope = (z0 - z1) / dt
        life = z1 / slope if slope > 0 else dt / frac
        dt = frac * life
    else:
        raise BudgetError("no extinction within the step budget", steps=max_steps)
    ts, sups = np.array(ts), np.array(sups)
    z = sups ** (1 - m)
    tail = slice(max(0, ts.size - fit_points), ts.size)
    b, a = np.polyfit(ts[tail], z[tail], 1)
    T = -a / b
    tr = OriginalTrace(ts, sups, states, {"T_estimate": T, "steps": ts.size - 1, "frac": frac})
    return T, tr


def map_to_rescaled(trace: OriginalTrace, T: float, m: float):
    """(tau_k, w_k) from original states q_k = u_k^m via w = q ((1-m)(T-t))^{-m/(1-m)}."""
    t = trace.t
    ok = t < T
    tau = np.log(T / (T - t[ok])) / (1 - m)
    ws = [q * ((1 - m) * (T - tk)) ** (-m / (1 - m)) for q, tk in zip(np.array(trace.states)[ok], t[ok])]
    return tau, ws
