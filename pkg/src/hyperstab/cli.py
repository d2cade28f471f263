"""Batch command line: ``hyperstab <command> [flags]``.

Every run writes CSV tables, a JSON manifest and a short summary into the
output directory. Exit codes: 0 success, 2 usage or configuration error,
3 numerical failure (the manifest then records the error code).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HyperstabError, InputError

COMMANDS = ("extremal", "spectrum", "stability", "el-scan", "flow", "flow-original", "peucs", "hsm-check")

GRID = {"rho_max": 30.0, "panel_width": 0.5, "order": 12}
MODEL = {"n": None, "p": None, "lambda": None}

DEFAULTS = {
    "extremal": {**MODEL, **GRID, "tol": 1e-8},
    "spectrum": {**MODEL, **GRID, "sectors": "0,1,2", "count": 3, "h": 0.02, "cutoff": None},
    "stability": {**MODEL, **GRID, "epsilons": "0.1,0.01,0.001,0.0001", "h": 0.02},
    "el-scan": {**MODEL, **GRID, "epsilons": "0.1,0.01,0.001,0.0001", "eps0": 0.25, "h": 0.02},
    "flow": {"n": None, "m": None, **GRID, "dt": 0.05, "tau_end": 24.0, "amp": 0.3, "calibrate": True},
    "flow-original": {"n": None, "m": None, **GRID, "T": 1.0, "frac": 0.01, "threshold": 1e-6},
    "peucs": {"n": None, "lambda": None, "epsilons": "0.08,0.04,0.02,0.01"},
    "hsm-check": {"N": None, "k": None, "mu": None, "p": None, "pairs": 10, "seed": 0},
}

FLOATS = {"p", "lambda", "rho_max", "panel_width", "tol", "h", "cutoff", "eps0", "m", "dt", "tau_end", "amp",
          "T", "frac", "threshold", "mu"}
INTS = {"n", "order", "count", "N", "k", "pairs", "seed"}


def _workers() -> int:
    env = os.environ.get("HYPERSTAB_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError as exc:
        raise InputError("HYPERSTAB_THREADS must be an integer") from exc


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _floats(s) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).split(",") if v.strip()]


def _ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    return [int(v) for v in str(s).split(",") if v.strip()]


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyperstab", description="Poincare-Sobolev stability computations on hyperbolic space")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command")
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="JSON file with option overrides; flags win")
        sp.add_argument("--out", default=None, help="output directory (default out/<command>)")
        for key, val in DEFAULTS[cmd].items():
            flag = "--" + key.replace("_", "-")
            kw = {"dest": key, "default": argparse.SUPPRESS}
            if isinstance(val, bool):
                kw["type"] = lambda s: s.lower() in ("1", "true", "yes")
            elif key in INTS:
                kw["type"] = int
            elif key in FLOATS:
                kw["type"] = float
            sp.add_argument(flag, **kw)
    return ap


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    """Defaults < config file < flags. Unknown config keys are rejected."""
    cfg = dict(DEFAULTS[command])
    if getattr(ns, "config", None):
        try:
            data = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        for k, v in data.items():
            cfg[k] = v
    for k in DEFAULTS[command]:
        if k in vars(ns):
            cfg[k] = getattr(ns, k)
    missing = [k for k, v in cfg.items() if v is None and k not in ("cutoff",)]
    if missing:
        raise InputError(f"missing required options: {', '.join(missing)}")
    for k in list(cfg):
        if cfg[k] is None:
            continue
        try:
            if k in INTS:
                cfg[k] = int(cfg[k])
            elif k in FLOATS:
                cfg[k] = float(cfg[k])
        except (TypeError, ValueError) as exc:
            raise InputError(f"option {k} has an invalid value") from exc
    return cfg


# ---------------------------------------------------------------------------
# commands


def _model(cfg):
    from .extremal import ModelParams

    return ModelParams(cfg["n"], cfg["p"], cfg["lambda"])


def _ground_state(cfg, params):
    from .extremal import best_constant, default_grid, solve_ground_state

    grid = None
    if (cfg["rho_max"], cfg["panel_width"], cfg["order"]) != (GRID["rho_max"], GRID["panel_width"], GRID["order"]):
        grid = default_grid(params, rho_max=cfg["rho_max"], panel_width=cfg["panel_width"], order=cfg["order"])
    U = solve_ground_state(params, grid=grid)
    S = best_constant(U, params)
    return U, S


def _grid_info(U):
    g = U.grid
    return {"n_nodes": int(g.size), "n_panels": int(g.n_panels), "rho_max": float(g.rho_max), "order": int(g.order)}


def cmd_extremal(cfg, out: Path):
    params = _model(cfg)
    U, S = _ground_state(cfg, params)
    U.to_csv(out / "profile.csv", params)
    meta = {k: U.meta[k] for k in ("a", "tail_exponent", "tail_amplitude", "consistency", "bisections",
                                   "newton_iterations", "ode_residual", "monotone") if k in U.meta}
    res = {"S": S, "energy": S ** ((params.p + 1) / (params.p - 1)), **meta, "grid": _grid_info(U),
           "params": params.as_dict()}
    summary = [f"S = {S:.10g}", f"U(0) = {U.meta['a']:.10g}", f"tail exponent = {U.meta['tail_exponent']:.6g}"]
    return res, summary


def cmd_spectrum(cfg, out: Path):
    from .spectral import sector_spectrum

    params = _model(cfg)
    U, S = _ground_state(cfg, params)
    sectors = _ints(cfg["sectors"])
    if any(l < 0 for l in sectors) or cfg["count"] < 1:
        raise InputError("sectors must be >= 0 and count >= 1")
    with ThreadPoolExecutor(max_workers=_workers()) as ex:
        results = list(ex.map(lambda l: sector_spectrum(U, params, l, cfg["count"], h=cfg["h"], cutoff=cfg["cutoff"]),
                              sectors))
    rows = [r for res in results for r in res.rows()]
    _write_csv(out / "eigenvalues.csv", ("sector", "index", "eigenvalue", "coarse", "fine", "trusted"), rows)
    table = {str(r.l): [float(v) for v in r.eigenvalues] for r in results}
    res = {"S": S, "eigenvalues": table, "grid": _grid_info(U), "params": params.as_dict()}
    summary = [f"sector {r.l}: " + ", ".join(f"{v:.6f}" for v in r.eigenvalues) for r in results]
    by_l = {r.l: r for r in results}
    if 0 in by_l and by_l[0].eigenvalues.size >= 2:
        res["mu3"] = float(by_l[0].eigenvalues[1])
        res["mu3_margin"] = float(by_l[0].eigenvalues[1] - params.p)
        summary.append(f"mu3 - p = {res['mu3_margin']:.6f}")
    return res, summary


def _psi3(U, params, h):
    from .spectral import sector_spectrum

    r = sector_spectrum(U, params, 0, 2, h=h)
    return r.eigenfunctions[1], float(r.eigenvalues[1])


def cmd_stability(cfg, out: Path):
    from .stability import stability_ratio_scan

    params = _model(cfg)
    U, S = _ground_state(cfg, params)
    psi, mu3 = _psi3(U, params, cfg["h"])
    rows = stability_ratio_scan(psi, _floats(cfg["epsilons"]), U, params, S)
    _write_csv(out / "stability.csv", ("eps", "deficit", "distance", "ratio_sq"), rows)
    target = 1.0 / (1.0 - params.p / mu3)
    ratios = [r[3] for r in rows if math.isfinite(r[3])]
    res = {"S": S, "mu3": mu3, "target_ratio_sq": target, "ratios_sq": ratios,
           "C_empirical": math.sqrt(max(ratios)) if ratios else float("nan"), "params": params.as_dict()}
    summary = [f"mu3 = {mu3:.6f}", f"target dist^2/delta^2 = {target:.6f}",
               f"smallest-eps ratio = {ratios[-1]:.6f}" if ratios else "no ratios"]
    return res, summary


def cmd_el_scan(cfg, out: Path):
    from .stability import euler_lagrange_scan

    params = _model(cfg)
    U, S = _ground_state(cfg, params)
    psi, mu3 = _psi3(U, params, cfg["h"])
    eps = _floats(cfg["epsilons"])
    fam = [(f"psi3:{e}", U.with_values(U.values + e * psi.values)) for e in eps]
    fam += [(f"scale:{e}", U.with_values((1 + e) * U.values)) for e in eps]
    rows = euler_lagrange_scan(fam, U, params, cfg["eps0"])
    _write_csv(out / "el_scan.csv", ("member", "distance", "residual_hminus1", "ratio", "flag"), rows)
    ratios = [r[3] for r in rows if r[4] == "ok"]
    res = {"S": S, "mu3": mu3, "C_empirical": max(ratios) if ratios else float("nan"),
           "skipped": [r[0] for r in rows if r[4] != "ok"], "params": params.as_dict()}
    summary = [f"max dist/residual = {res['C_empirical']:.6f}", f"skipped members: {len(res['skipped'])}"]
    return res, summary


def _flow_setup(cfg):
    from .extremal import ModelParams
    from .flow import FlowParams

    m = cfg["m"]
    mp = ModelParams(cfg["n"], 1.0 / m, 0.0)
    U, S = _ground_state(cfg, mp)
    fp = FlowParams(cfg["n"], m, cfg.get("dt", 0.05), U.grid)
    return mp, U, S, fp


def cmd_flow(cfg, out: Path):
    from . import flow as fl

    mp, U, S, fp = _flow_setup(cfg)
    shape = U.with_values(U.values * (1 + cfg["amp"] * np.exp(-U.grid.nodes)))
    kappa = fl.calibrate_amplitude(shape, U, fp) if cfg["calibrate"] else 1.0
    tr = fl.run_rescaled_flow(shape.with_values(kappa * shape.values), fp, cfg["tau_end"], U)
    tr.to_csv(out / "flow_trace.csv")
    tau = tr.column("tau")
    lp = [fl.lp_distance(U.with_values(s), U, mp.p) for s in tr.states]
    rates = {
        "entropy": fl.fit_rate(tau, tr.column("entropy")),
        "lp_gap": fl.fit_rate(tau, lp),
        "sup_rel_error": fl.fit_rate(tau, tr.column("sup_rel_error")),
    }
    i_inf = (mp.p - 1) / (2 * (mp.p + 1)) * S ** ((mp.p + 1) / (mp.p - 1))
    _, mu3 = _psi3(U, mp, 0.02)
    gamma = (mu3 - mp.p) / mp.p
    res = {
        "mu3": mu3, "predicted_rates": {"entropy": 2 * gamma, "lp_gap": (mp.p + 1) * gamma, "sup_rel_error": gamma},
        "kappa": kappa, "S": S, "energy_limit": i_inf, "energy_final": tr.column("energy")[-1],
        "monotone": tr.meta["monotone"], "max_relative_energy_rise": tr.meta["max_relative_energy_rise"],
        "rates": {k: {"rate": v[0], "jackknife_error": v[1]} for k, v in rates.items()},
        "rate_ratio_entropy_lp": rates["entropy"][0] / rates["lp_gap"][0],
        "rate_ratio_target": 2 / (mp.p + 1),
        "benilan_crandall_violation": fl.benilan_crandall_check(tr, fp, U),
        "aborted": tr.meta["aborted"], "rate_claims_valid": fp.rate_claims_valid, "params": mp.as_dict(),
    }
    summary = [f"kappa = {kappa:.12g}", f"entropy rate = {rates['entropy'][0]:.5f} +- {rates['entropy'][1]:.1e} (predicted {2 * gamma:.5f})",
               f"rate ratio = {res['rate_ratio_entropy_lp']:.4f} (target {2 / (mp.p + 1):.4f})",
               f"I0 final/limit - 1 = {res['energy_final'] / i_inf - 1:.2e}"]
    return res, summary


def cmd_flow_original(cfg, out: Path):
    from . import flow as fl

    mp, U, S, fp = _flow_setup(cfg)
    u0 = fl.separable_initial_data(U, cfg["m"], cfg["T"])
    T, tr = fl.run_original_flow(u0, fp, threshold=cfg["threshold"], frac=cfg["frac"], dt0=cfg["frac"] * cfg["T"])
    tr.to_csv(out / "original_trace.csv")
    res = {"T_seed": cfg["T"], "T_estimate": T, "relative_error": abs(T - cfg["T"]) / cfg["T"],
           "steps": tr.meta["steps"], "params": mp.as_dict()}
    return res, [f"T estimate = {T:.8g} (seed {cfg['T']})"]


def cmd_peucs(cfg, out: Path):
    from .euclidean import peucs_quotient, sobolev_constant_exact

    n, lam = cfg["n"], cfg["lambda"]
    eps = _floats(cfg["epsilons"])
    S = sobolev_constant_exact(n)
    with ThreadPoolExecutor(max_workers=_workers()) as ex:
        qs = list(ex.map(lambda e: peucs_quotient(n, lam, e), eps))
    rows = []
    for e, q in zip(eps, qs):
        norm = e * e * (math.log(1 / e) if n == 4 else 1.0)
        rows.append((e, q, S - q, (S - q) / norm))
    _write_csv(out / "peucs.csv", ("eps", "quotient", "gap", "normalized_gap"), rows)
    res = {"S_euclidean": S, "quotients": qs, "normalized_gaps": [r[3] for r in rows],
           "below_S": [bool(q < S) for q in qs]}
    return res, [f"S(R^{n}) = {S:.10g}"] + [f"eps={r[0]:g}: gap={r[2]:.3e}" for r in rows]


def cmd_hsm_check(cfg, out: Path):
    from . import hsm
    from .extremal import best_constant, solve_ground_state

    cp = hsm.CylParams(cfg["N"], cfg["k"], cfg["mu"], cfg["p"])
    rng = np.random.default_rng(cfg["seed"])
    grid = hsm.cyl_grid_for(cp)
    hs = hsm.half_space_grid(cp.n, n_theta=256)
    rows = []
    for i in range(cfg["pairs"]):
        a = hsm.gaussian_bump(*rng.uniform((-0.5, 0.3, 0.3, 0.0), (0.5, 0.6, 0.8, 1.0)))
        b = hsm.gaussian_bump(*rng.uniform((-0.5, 0.3, 0.3, 0.0), (0.5, 0.6, 0.8, 1.0)))
        res, _, _ = hsm.verify_identities(a, b, cp, grid, hs)
        rows.append((i, *res))
    _write_csv(out / "identities.csv", ("pair", "l2_residual", "nonlinear_residual", "gradient_residual"), rows)
    U = solve_ground_state(cp.model)
    S = best_constant(U, cp.model)
    bump = hsm.gaussian_bump(0.1, 0.4, 0.5, 0.3)
    _, rep = hsm.hsm_deficit(bump, cp, S, grid, hs)
    res = {"dictionary": cp.as_dict(), "S_lambda": S, "S_hsm": hsm.hsm_best_constant(S, cp),
           "max_identity_residual": max(max(r[1:]) for r in rows), "deficit_routes": rep}
    return res, [f"lambda = {cp.lam:.6g}, n = {cp.n}", f"max identity residual = {res['max_identity_residual']:.2e}",
                 f"deficit route discrepancy = {rep['route_discrepancy']:.2e}"]


HANDLERS = {
    "extremal": cmd_extremal, "spectrum": cmd_spectrum, "stability": cmd_stability, "el-scan": cmd_el_scan,
    "flow": cmd_flow, "flow-original": cmd_flow_original, "peucs": cmd_peucs, "hsm-check": cmd_hsm_check,
}


def run(command: str, cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"command": command, "config": cfg, "version": __version__, "workers": _workers()}
    code = 0
    try:
        results, summary = HANDLERS[command](cfg, out)
        manifest.update(status="ok", results=results)
    except InputError as exc:
        manifest.update(status="error", error={"code": exc.code, "message": str(exc), "details": exc.details})
        summary, code = [f"error: {exc}"], 2
    except HyperstabError as exc:
        manifest.update(status="error", error={"code": exc.code, "message": str(exc), "details": exc.details})
        summary, code = [f"numerical failure ({exc.code}): {exc}"], 3
    manifest["wall_time_s"] = time.perf_counter() - t0
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True, ensure_ascii=False)
                                       + "\n", encoding="utf-8")
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    print("\n".join(summary))
    return code


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    if ns.command is None:
        ap.print_usage(sys.stderr)
        return 2
    try:
        cfg = resolve_config(ns.command, ns)
        _workers()
        out = Path(ns.out) if ns.out else Path("out") / ns.command
    except InputError as exc:
        print(f"hyperstab: error: {exc}", file=sys.stderr)
        ap.print_usage(sys.stderr)
        return 2
    return run(ns.command, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
