"""Ball-model primitives: distances, translations, radial and axisymmetric quadrature.

Radial integrals use composite Gauss-Lobatto-Legendre panels in the geodesic
radius, so the node set contains both rho = 0 and rho_max and the same panels
carry spectral differentiation matrices for energy integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, special

from .errors import InputError

__all__ = [
    "BallPoint",
    "RadialGrid",
    "AxisymGrid",
    "sphere_measure",
    "make_radial_grid",
    "make_axisym_grid",
    "hyperbolic_distance",
    "hyperbolic_translate",
    "geodesic_cosine",
    "green_function",
    "green_asymptotics",
    "integrate_radial",
    "shell_rule",
    "integrate_translated",
    "gll_rule",
    "logsinh",
]


def sphere_measure(k: int) -> float:
    """Surface measure of the unit sphere S^{k-1} in R^k."""
    return 2.0 * math.pi ** (k / 2) / math.gamma(k / 2)


def logsinh(x):
    """log(sinh x) for x > 0 without overflow."""
    x = np.asarray(x, dtype=float)
    return x + np.log1p(-np.exp(-2.0 * x)) - math.log(2.0)


# ---------------------------------------------------------------------------
# points and isometries


@dataclass(frozen=True, eq=False)
class BallPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1:
            raise InputError("BallPoint needs a 1-d coordinate vector")
        if not np.all(np.isfinite(c)) or float(c @ c) >= 1.0:
            raise InputError("BallPoint must lie strictly inside the unit ball", norm=float(np.sqrt(c @ c)))
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size

    def norm(self) -> float:
        return float(np.sqrt(self.coords @ self.coords))


def _coords(x):
    return x.coords if isinstance(x, BallPoint) else np.asarray(x, dtype=float)


def hyperbolic_distance(x, y):
    """Geodesic distance in the ball model.

    Uses sinh(d/2) = |x-y| / sqrt((1-|x|^2)(1-|y|^2)), which equals the acosh
    formula but keeps full relative accuracy for nearby points. Accepts
    BallPoints or arrays of shape (..., n).
    """
    x, y = _coords(x), _coords(y)
    diff = np.sum((x - y) ** 2, axis=-1)
    den = (1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1))
    d = 2.0 * np.arcsinh(np.sqrt(diff / den))
    return float(d) if np.ndim(d) == 0 else d


def hyperbolic_translate(b, x):
    """Moebius translation tau_b(x); tau_b(0) = b, tau_0 = identity."""
    bb, xx = _coords(b), _coords(x)
    nb = np.sum(bb * bb, axis=-1)[..., None]
    nx = np.sum(xx * xx, axis=-1)[..., None]
    xb = np.sum(xx * bb, axis=-1)[..., None]
    den = nb * nx + 2.0 * xb + 1.0
    assert np.all(den > 0.0), "translation denominator must be positive inside the ball"
    out = ((1.0 - nb) * xx + (nx + 2.0 * xb + 1.0) * bb) / den
    if isinstance(b, BallPoint) and isinstance(x, BallPoint):
        return BallPoint(out)
    return out


def geodesic_cosine(rho1, rho2, theta):
    """Third side of a geodesic triangle with sides rho1, rho2 and angle theta.

    cosh d = cosh rho1 cosh rho2 - sinh rho1 sinh rho2 cos theta, evaluated as
    sinh^2(d/2) = sinh^2((rho1-rho2)/2) + sinh rho1 sinh rho2 sin^2(theta/2).
    """
    rho1, rho2, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rho1, rho2, theta)))
    t = np.sinh(0.5 * (rho1 - rho2)) ** 2 + np.sinh(rho1) * np.sinh(rho2) * np.sin(0.5 * theta) ** 2
    d = 2.0 * np.arcsinh(np.sqrt(t))
    return float(d) if d.ndim == 0 else d


# ---------------------------------------------------------------------------
# Green's function of -Delta on H^n


def _green_scalar(n: int, r: float) -> float:
    # G(r) = 2^{n-1} e^{-(n-1) r} int_0^inf e^{-(n-1)x} (1 - e^{-2(r+x)})^{-(n-1)} dx
    k = n - 1

    def f(x):
        return math.exp(-k * x) * (-math.expm1(-2.0 * (r + x))) ** (-k)

    brk = [min(r, 1.0), min(10.0 * r, 5.0)]
    total = 0.0
    lo = 0.0
    for hi in sorted(set(brk)) + [60.0 / k]:
        if hi <= lo:
            continue
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
        lo = hi
    # remainder beyond lo: integrand <= e^{-kx}(1-e^{-2lo})^{-k}
    total += math.exp(-k * lo) / k * (-math.expm1(-2.0 * (r + lo))) ** (-k)
    return 2.0**k * math.exp(-k * r) * total


def green_function(n: int, r):
    """G(r) = int_r^inf sinh(s)^{-(n-1)} ds, the radial Green's function."""
    if n < 2:
        raise InputError("dimension must be at least 2")
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0.0):
        raise InputError("Green's function is singular at r <= 0")
    out = np.vectorize(lambda v: _green_scalar(n, float(v)))(arr)
    return float(out) if out.ndim == 0 else out


def green_asymptotics(n: int) -> tuple[float, float]:
    """Comparison constants (c_far, c_near).

    G e^{(n-1) r} -> c_far as r -> inf and G r^{n-2} -> c_near as r -> 0.
    """
    return 2.0 ** (n - 1) / (n - 1), 1.0 / (n - 2)


# ---------------------------------------------------------------------------
# reference rules


@lru_cache(maxsize=None)
def gll_rule(q: int):
    """Gauss-Lobatto-Legendre nodes, weights and differentiation matrix on [-1, 1]."""
    if q < 3:
        raise InputError("need at least 3 Lobatto nodes")
    inner = special.roots_jacobi(q - 2, 1.0, 1.0)[0]
    x = np.concatenate(([-1.0], inner, [1.0]))
    N = q - 1
    P = special.eval_legendre(N, x)
    w = 2.0 / (N * (N + 1) * P**2)
    D = np.zeros((q, q))
    for i in range(q):
        for j in range(q):
            if i != j:
                D[i, j] = P[i] / (P[j] * (x[i] - x[j]))
    D[0, 0] = -N * (N + 1) / 4.0
    D[-1, -1] = N * (N + 1) / 4.0
    bary = np.array([1.0 / np.prod(x[j] - np.delete(x, j)) for j in range(q)])
    return x, w, D, bary


@lru_cache(maxsize=None)
def _gauss_unit(q: int, alpha: float):
    """Rule for int_0^1 eta^alpha g(eta) d eta."""
    x, w = special.roots_jacobi(q, 0.0, alpha)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1.0)


def _barycentric(xn, bary, x):
    """Evaluate Lagrange basis at points x (shape (m,)) -> (m, q) matrix."""
    diff = x[:, None] - xn[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = bary[None, :] / diff
    L = terms / terms.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    if rows.any():
        L[rows] = exact[rows].astype(float)
    return L


# ---------------------------------------------------------------------------
# radial grid


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Composite Lobatto grid on [0, rho_max] with sinh^{n-1} folded into the weights."""

    n: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    omega: float
    rho_max: float
    tail_tol: float
    edges: np.ndarray
    order: int
    spec: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def n_panels(self) -> int:
        return self.edges.size - 1

    @cached_property
    def panel_slices(self) -> list[slice]:
        q = self.order
        return [slice(e * (q - 1), e * (q - 1) + q) for e in range(self.n_panels)]

    @cached_property
    def sinh_pow(self) -> np.ndarray:
        return np.sinh(self.nodes) ** (self.n - 1)

    @cached_property
    def plain_weights(self) -> np.ndarray:
        """Weights for int_0^{rho_max} f d rho (no sinh factor)."""
        _, w, _, _ = gll_rule(self.order)
        out = np.zeros(self.size)
        for e, sl in enumerate(self.panel_slices):
            h = self.edges[e + 1] - self.edges[e]
            out[sl] += 0.5 * h * w
        return out

    def derivative(self, values: np.ndarray) -> np.ndarray:
        """Per-panel derivative at the panel nodes, shape (n_panels, order)."""
        _, _, D, _ = gll_rule(self.order)
        v = np.asarray(values, dtype=float)
        out = np.empty((self.n_panels, self.order))
        for e, sl in enumerate(self.panel_slices):
            h = self.edges[e + 1] - self.edges[e]
            out[e] = (2.0 / h) * (D @ v[sl])
        return out

    def nodal_derivative(self, values: np.ndarray) -> np.ndarray:
        """Derivative at the nodes, averaging the two one-sided panel values at interfaces."""
        per = self.derivative(values)
        out = np.zeros(self.size)
        cnt = np.zeros(self.size)
        for e, sl in enumerate(self.panel_slices):
            out[sl] += per[e]
            cnt[sl] += 1.0
        return out / cnt

    def panel_of(self, rho: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, rho, side="right") - 1
        return np.clip(idx, 0, self.n_panels - 1)

    def interpolate(self, values, rho, panel_values: np.ndarray | None = None) -> np.ndarray:
        """Spectral interpolation inside [0, rho_max].

        ``panel_values`` of shape (n_panels, order) interpolates a per-panel
        field (e.g. a derivative) instead of nodal values.
        """
        xr, _, _, bary = gll_rule(self.order)
        rho = np.asarray(rho, dtype=float)
        flat = rho.ravel()
        out = np.empty(flat.size)
        pid = self.panel_of(flat)
        if panel_values is None:
            v = np.asarray(values, dtype=float)
            panel_values = np.stack([v[sl] for sl in self.panel_slices])
        for e in np.unique(pid):
            m = pid == e
            a, b = self.edges[e], self.edges[e + 1]
            xi = (2.0 * flat[m] - a - b) / (b - a)
            out[m] = _barycentric(xr, bary, xi) @ panel_values[e]
        return out.reshape(rho.shape)

    def stiffness(self, l: int = 0, robin: float = 0.0) -> np.ndarray:
        """Dense matrix of int (u' v' + l(l+n-2) u v / sinh^2) sinh^{n-1} plus a Robin term.

        The Robin term robin * sinh^{n-1}(rho_max) u v accounts for an
        exponential tail u ~ e^{-robin rho} beyond rho_max. The factor omega is
        not included.
        """
        _, w, D, _ = gll_rule(self.order)
        K = np.zeros((self.size, self.size))
        for e, sl in enumerate(self.panel_slices):
            h = self.edges[e + 1] - self.edges[e]
            De = (2.0 / h) * D
            We = 0.5 * h * w * self.sinh_pow[sl]
            K[sl, sl] += De.T @ (We[:, None] * De)
        if l:
            ang = np.zeros(self.size)
            ang[1:] = l * (l + self.n - 2) * self.quad_weights[1:] / np.sinh(self.nodes[1:]) ** 2
            K[np.diag_indices(self.size)] += ang
        K[-1, -1] += robin * self.sinh_pow[-1]
        return K

    @cached_property
    def bandwidth(self) -> int:
        return self.order - 1


def make_radial_grid(
    n: int,
    rho_max: float = 30.0,
    panel_width: float = 0.5,
    order: int = 12,
    tail_tol: float = 1e-12,
    refine: int = 1,
    core: float | None = None,
    growth: float = 1.5,
) -> RadialGrid:
    """Composite Lobatto grid; ``refine`` divides every panel width.

    With ``core`` set, panels start at that width at the origin and grow
    geometrically by ``growth`` until they reach ``panel_width``, which
    resolves concentrated profiles.
    """
    if n < 2:
        raise InputError("dimension must be at least 2")
    if rho_max <= 0 or panel_width <= 0:
        raise InputError("rho_max and panel_width must be positive")
    if math.exp(-(n - 1) * rho_max) >= tail_tol:
        raise InputError("rho_max too small for the requested tail tolerance", rho_max=rho_max)
    widths = []
    if core is not None and core < panel_width:
        w = core
        while w < panel_width and sum(widths) + w < rho_max:
            widths.append(w)
            w *= growth
    start = sum(widths)
    n_uni = max(1, int(math.ceil((rho_max - start) / panel_width - 1e-9)))
    coarse = np.concatenate(([0.0], np.cumsum(widths), np.linspace(start, rho_max, n_uni + 1)[1:]))
    # refinement splits every coarse panel
    edges = np.unique(np.concatenate([np.linspace(a, b, refine + 1) for a, b in zip(coarse[:-1], coarse[1:])]))
    n_pan = edges.size - 1
    xr, w, _, _ = gll_rule(order)
    nodes = np.zeros(n_pan * (order - 1) + 1)
    weights = np.zeros_like(nodes)
    for e in range(n_pan):
        a, b = edges[e], edges[e + 1]
        sl = slice(e * (order - 1), e * (order - 1) + order)
        nodes[sl] = 0.5 * (a + b) + 0.5 * (b - a) * xr
        weights[sl] += 0.5 * (b - a) * w
    nodes[0], nodes[-1] = 0.0, rho_max
    weights = weights * np.sinh(nodes) ** (n - 1)
    spec = dict(
        n=n, rho_max=rho_max, panel_width=panel_width, order=order, tail_tol=tail_tol, refine=refine, core=core, growth=growth
    )
    return RadialGrid(n, nodes, weights, sphere_measure(n), float(rho_max), tail_tol, edges, order, spec)


def integrate_radial(grid: RadialGrid, f, l: int = 0) -> float:
    """omega_{n-1} sum_i w_i f_i.

    Sector-l integrands carry the same radial weight, so ``l`` only documents
    intent.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.nodes.shape:
        raise InputError("node values do not match the grid", expected=grid.size, got=f.size)
    return float(grid.omega * np.dot(grid.quad_weights, f))


# ---------------------------------------------------------------------------
# axisymmetric tensor grid


@dataclass(frozen=True, eq=False)
class AxisymGrid:
    """Tensor grid in (rho, cos theta) for functions invariant under rotations about an axis.

    The angular rule is Gauss-Jacobi with weight (1-x^2)^{(n-3)/2}, which is
    sin^{n-2} theta d theta written in x = cos theta. ``weights`` include
    omega_{n-2} so that sum(weights * f) approximates the volume integral.
    """

    radial: RadialGrid
    x: np.ndarray
    wx: np.ndarray

    @property
    def n(self) -> int:
        return self.radial.n

    @cached_property
    def rho(self) -> np.ndarray:
        return np.broadcast_to(self.radial.nodes[:, None], (self.radial.size, self.x.size))

    @cached_property
    def cos_theta(self) -> np.ndarray:
        return np.broadcast_to(self.x[None, :], self.rho.shape)

    @cached_property
    def weights(self) -> np.ndarray:
        return sphere_measure(self.n - 1) * self.radial.quad_weights[:, None] * self.wx[None, :]


def make_axisym_grid(radial: RadialGrid, n_theta: int = 96) -> AxisymGrid:
    a = 0.5 * (radial.n - 3)
    x, w = special.roots_jacobi(n_theta, a, a)
    return AxisymGrid(radial, x, w)


# ---------------------------------------------------------------------------
# integrals of functions radial about an off-centre point


def shell_rule(rho, s: float, n: int, d_cut: float = np.inf, panels: int = 12, order: int = 16):
    """Quadrature over the sphere of radius rho (about 0) for functions of the distance to c_s.

    c_s is the point at geodesic distance s on the axis theta = 0. For every
    rho returns arrays (d, x, w) of shape (len(rho), panels*order) with

        int_0^pi F(d(rho, theta), cos theta) sin^{n-2} theta d theta ~= sum_j w_j F(d_j, x_j).

    The angular variable is xi = (1 - cos theta)/2, in which sinh^2(d/2) is
    linear; panels are uniform in d on [|rho - s|, min(rho + s, d_cut)], and
    the end panels carry the exact Jacobi weight. F must be an even smooth
    function of d for spectral accuracy.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    alpha = 0.5 * (n - 3)
    a = np.abs(rho - s)
    b = rho + s
    b_eff = np.minimum(b, d_cut)
    P = np.sinh(rho) * np.sinh(s)
    degenerate = P <= 1e-300
    live = (a < b_eff) | (degenerate & (a < d_cut))

    # d breakpoints -> xi breakpoints
    frac = np.linspace(0.0, 1.0, panels + 1)
    dk = a[:, None] + (np.where(live, b_eff, a) - a)[:, None] * frac[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        xik = np.sinh(0.5 * (dk - a[:, None])) * np.sinh(0.5 * (dk + a[:, None])) / P[:, None]
    xik = np.where(degenerate[:, None], frac[None, :], xik)
    xik[:, 0] = 0.0
    full = (b <= d_cut) | degenerate
    xik[full, -1] = 1.0
    xik = np.clip(xik, 0.0, 1.0)

    eg, wg = _gauss_unit(order, 0.0)
    ej, wj = _gauss_unit(order, alpha)
    lo, hi = xik[:, :-1], xik[:, 1:]
    L = hi - lo
    xi = lo[:, :, None] + L[:, :, None] * eg[None, None, :]
    w = L[:, :, None] * wg[None, None, :] * (xi * (1.0 - xi)) ** alpha
    if alpha != 0.0:
        # first panel: exact xi^alpha
        x0 = hi[:, 0:1] * ej[None, :]
        xi[:, 0, :] = x0
        w[:, 0, :] = hi[:, 0:1] ** (alpha + 1.0) * wj[None, :] * (1.0 - x0) ** alpha
        # last panel when it reaches xi = 1: exact (1 - xi)^alpha
        span = 1.0 - lo[:, -1:]
        x1 = 1.0 - span * ej[None, :]
        w1 = span ** (alpha + 1.0) * wj[None, :] * x1**alpha
        xi[full, -1, :] = x1[full]
        w[full, -1, :] = w1[full]
    w = w * 2.0 ** (n - 2)
    w[~live] = 0.0
    t = np.sinh(0.5 * a)[:, None, None] ** 2 + P[:, None, None] * xi
    d = 2.0 * np.arcsinh(np.sqrt(t))
    d = np.where(degenerate[:, None, None], a[:, None, None], d)
    x = 1.0 - 2.0 * xi
    m = rho.size
    return d.reshape(m, -1), x.reshape(m, -1), w.reshape(m, -1)


def _local_outer(s: float, d_cut: float, width: float = 0.5, order: int = 12):
    lo = max(0.0, s - d_cut)
    hi = s + d_cut
    n_pan = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n_pan + 1)
    xr, w, _, _ = gll_rule(order)
    nodes = (0.5 * (edges[:-1] + edges[1:]))[:, None] + 0.5 * np.diff(edges)[:, None] * xr[None, :]
    weights = 0.5 * np.diff(edges)[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def integrate_translated(f, s: float, n: int, d_cut: float, g=None, outer: RadialGrid | None = None, **rule) -> float:
    """int over B^n of g(rho) f(d(x, c_s)) dv, with f negligible beyond d_cut.

    ``f`` is a vectorised function of the distance; ``g`` an optional radial
    weight (callable of rho, or nodal values on ``outer``). Without ``outer``
    a local Lobatto grid covering [s - d_cut, s + d_cut] is used.
    """
    if outer is None:
        rho, wr = _local_outer(s, d_cut)
        wr = wr * np.sinh(rho) ** (n - 1)
        gv = np.ones_like(rho) if g is None else g(rho)
    else:
        rho, wr = outer.nodes, outer.quad_weights
        gv = np.ones_like(rho) if g is None else (g(rho) if callable(g) else np.asarray(g, dtype=float))
    keep = np.abs(rho - s) < d_cut
    d, _, w = shell_rule(rho[keep], s, n, d_cut=d_cut, **rule)
    inner = np.sum(w * f(d), axis=1)
    return float(sphere_measure(n - 1) * np.sum(wr[keep] * gv[keep] * inner))
