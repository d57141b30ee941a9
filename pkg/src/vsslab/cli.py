"""Command-line front end.

Every subcommand resolves its settings from built-in defaults, then an
optional INI file (``--config``), then command-line flags, and records the
resolved values in the run manifest.  Outputs go to
``<root>/<timestamp>-<command>/`` where ``<root>`` is ``--out``, the
``VSSLAB_RUNS`` environment variable, or ``./runs``.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
import warnings

import numpy as np

from . import __version__
from .io import RunDirectory, energy_columns, field_columns, profile_columns
from .model import (DivergenceError, DomainError, InvalidParameterError, NumericError,
                    ProblemParams, classify_potential, energy_majorant_g, make_potential)

log = logging.getLogger("vsslab")

COMMANDS = ("profile", "blowup", "classify", "evolve", "dichotomy", "stationary", "variational",
            "energy", "sweep", "validate")

# section -> key -> default; flags are ``--key`` with underscores as hyphens
DEFAULTS = {
    "problem": {"N": 1, "p": 2.0, "beta": 0.0, "seed": 0},
    "potential": {"potential": "power", "alpha0": 1.0, "omega0": 1.0, "table": ""},
    "shooting": {"r_max": 12.0, "rel_width": 1e-10, "sweep_points": 49},
    "blowup": {"a": 2.0, "ratio": 0.9, "f_inf": False},
    "evolution": {"mass": 1024.0, "rho": 1e-4, "shape": "tophat", "T": 1.0,
                  "t_out": "0.25,0.5,1", "R": 12.0, "h0": 1e-5, "grid_ratio": 1.05,
                  "h_max": 0.01, "rel_change": 0.02, "floor": 1e-3, "scheme": "split"},
    "dichotomy": {"levels": 6, "j_start": 0, "j_step": 6, "t_probe": 0.5},
    "stationary": {"kind": "minimal", "k": 1.0, "R_stat": 4.0, "r_min": 1e-4, "eps": 0.1,
                   "max_doublings": 60},
    "energy": {"s_values": "0.01,0.02,0.05,0.1,0.2,0.5,1"},
    "variational": {"R_var": 8.0, "n_var": 800},
    "sweep": {"sweep_param": "beta", "sweep_values": "0.5,1,2", "sweep_command": "profile"},
    "validate": {"only": ""},
}

USED = {
    "profile": ("problem", "shooting"),
    "blowup": ("problem", "blowup"),
    "classify": ("problem", "potential"),
    "evolve": ("problem", "potential", "evolution"),
    "dichotomy": ("problem", "potential", "evolution", "dichotomy"),
    "stationary": ("problem", "potential", "stationary"),
    "variational": ("problem", "shooting", "variational"),
    "energy": ("problem", "potential", "evolution", "energy"),
    "sweep": ("problem", "shooting", "blowup", "variational", "sweep"),
    "validate": ("validate",),
}


class UsageError(Exception):
    pass


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _coerce(value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def _floats(text: str) -> list:
    return [float(x) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vsslab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vsslab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="command")
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="INI file with sections " + ", ".join(USED[cmd]))
        sp.add_argument("--out", help="output root (overrides VSSLAB_RUNS)")
        sp.add_argument("-v", "--verbose", action="store_true")
        for sec in USED[cmd]:
            for key, dflt in DEFAULTS[sec].items():
                if isinstance(dflt, bool):
                    sp.add_argument(_flag(key), dest=key, default=None, nargs="?", const=True)
                else:
                    sp.add_argument(_flag(key), dest=key, default=None)
    return ap


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags; one flat dict per section."""
    cfg = {sec: dict(DEFAULTS[sec]) for sec in USED[command]}
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise UsageError(f"unknown config section [{sec}]")
            if sec not in cfg:
                continue
            for key, val in cp.items(sec):
                if key not in DEFAULTS[sec]:
                    raise UsageError(f"unknown key {key!r} in [{sec}]")
                cfg[sec][key] = val
    for sec in cfg:
        for key, dflt in DEFAULTS[sec].items():
            flag = getattr(args, key, None)
            if flag is not None:
                cfg[sec][key] = flag
            try:
                cfg[sec][key] = _coerce(cfg[sec][key], dflt)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {cfg[sec][key]!r}") from exc
    return cfg


def _params(cfg) -> ProblemParams:
    pr = cfg["problem"]
    return ProblemParams(pr["N"], pr["p"], pr["beta"])


def _potential(cfg):
    po = cfg["potential"]
    kind = po["potential"]
    if kind == "power":
        return make_potential("power", beta=cfg["problem"]["beta"])
    if kind == "flat":
        return make_potential("flat", alpha0=po["alpha0"])
    if kind == "flat-constant":
        return make_potential("flat-constant", omega0=po["omega0"])
    if kind in ("table", "tabulated"):
        return make_potential("tabulated", table_path=po["table"])
    raise UsageError(f"unknown potential {kind!r}")


def _grid(cfg):
    from .evolution import RadialGrid

    ev = cfg["evolution"]
    return RadialGrid.graded(cfg["problem"]["N"], ev["R"], h0=ev["h0"], ratio=ev["grid_ratio"],
                             h_max=ev["h_max"])


def _evolve(cfg, params, h, mass=None):
    from .evolution import evolve, make_dirac_approx

    ev = cfg["evolution"]
    grid = _grid(cfg)
    u0 = make_dirac_approx(ev["mass"] if mass is None else mass, ev["rho"], ev["shape"], grid)
    return evolve(params, h, u0, grid, ev["T"], t_out=_floats(ev["t_out"]),
                  rel_change=ev["rel_change"], floor=ev["floor"], scheme=ev["scheme"])


####################################################################
# subcommands; each returns (summary dict, exit status)


def cmd_profile(cfg, run, out):
    from .profiles import find_vss_profile, fit_gaussian_asymptote

    params = _params(cfg)
    sh = cfg["shooting"]
    res = find_vss_profile(params, rel_width=sh["rel_width"], r_max=sh["r_max"],
                           sweep_points=sh["sweep_points"], require_supercritical=False)
    summary = {"found": res.found, "f0": res.f0, "resolved_radius": res.resolved_radius,
               "note": res.note}
    if res.found:
        run.csv("f_inf.csv", profile_columns(res.profile))
        if res.profile.r_max >= 6.0:
            fit = fit_gaussian_asymptote(res.profile, params)
            summary.update(gaussian_constant=fit.c, gaussian_residual=fit.residual)
        out(f"f(0) = {res.f0:.10g}")
        if "gaussian_constant" in summary:
            out(f"Gaussian-fit constant = {summary['gaussian_constant']:.6g} "
                f"(flatness {summary['gaussian_residual']:.2%} on [4, 6])")
    else:
        out(f"no profile found: {res.note}")
    return summary, 0


def cmd_blowup(cfg, run, out):
    from .profiles import blowup_profile, f_infinity_limit

    params = _params(cfg)
    b = cfg["blowup"]
    if b["f_inf"]:
        res = f_infinity_limit(params)
        run.csv("f_infinity.csv", profile_columns(res.profile))
        summary = {"radii": res.radii, "cauchy": res.cauchy,
                   "F_inf_0": float(res.profile.f[0])}
        out(f"F_inf(0) = {summary['F_inf_0']:.10g}; Cauchy gaps {res.cauchy}")
        return summary, 0
    res = blowup_profile(params, b["a"], ratio=b["ratio"])
    run.csv("F_a.csv", profile_columns(res.profile))
    summary = {"a": b["a"], "F_a_0": float(res.profile.f[0]),
               "constant_measured": res.constant_measured,
               "constant_balance": res.constant_balance, "flatness": res.flatness,
               "levels": len(res.levels)}
    out(f"F_a(0) = {summary['F_a_0']:.10g}; boundary constant {res.constant_measured:.6g} "
        f"(predicted {res.constant_balance:.6g}), flatness {res.flatness:.3%}")
    return summary, 0


def cmd_classify(cfg, run, out):
    params = _params(cfg)
    h = _potential(cfg)
    c = classify_potential(h, params)
    run.json("classification.json", c)
    out(c.verdict)
    for k, v in c.to_dict().items():
        if k != "verdict":
            out(f"  {k}: {v}")
    return c.to_dict(), 0


def cmd_evolve(cfg, run, out):
    params = _params(cfg)
    h = _potential(cfg)
    fld = _evolve(cfg, params, h)
    run.csv("field.csv", field_columns(fld))
    lg = fld.steps
    run.csv("steps.csv", {"t": lg.t, "dt": lg.dt, "mass": lg.mass, "l2": lg.l2,
                          "balance": lg.balance})
    summary = {"steps": fld.n_steps, "u_center": {float(t): float(v[0])
                                                  for t, v in zip(fld.times, fld.values)},
               "max_mass_balance": float(np.max(np.abs(lg.balance))) if lg.balance else 0.0}
    out(f"{fld.n_steps} steps; u(0, t): " +
        ", ".join(f"{t:g}: {v:.6g}" for t, v in summary["u_center"].items()))
    return summary, 0


def cmd_dichotomy(cfg, run, out):
    from .evolution import DIVERGING, SATURATING, k_sequence_limit

    params = _params(cfg)
    h = _potential(cfg)
    d, ev = cfg["dichotomy"], cfg["evolution"]
    js = [d["j_start"] + i * d["j_step"] for i in range(d["levels"])]
    masses = [2.0 ** j for j in js]
    rep = k_sequence_limit(params, h, masses, [ev["rho"]] * len(js), _grid(cfg), d["t_probe"],
                           d["t_probe"], rel_change=ev["rel_change"], floor=ev["floor"],
                           scheme=ev["scheme"])
    label = {DIVERGING: "RazorBlade (diverging)", SATURATING: "VSS (saturating)"}.get(
        rep.verdict, "Indeterminate")
    rows = {"j": js, "mass": masses, "u_center": [L.center[d["t_probe"]] for L in rep.levels],
            "l2": [L.l2[d["t_probe"]] for L in rep.levels],
            "ratio": [math.nan] + rep.ratios, "steps": [L.steps for L in rep.levels]}
    run.csv("levels.csv", rows)
    out(label)
    out(f"{'j':>4} {'u(0,t)':>14} {'ratio':>9} {'int u^2':>14}")
    for j, u, q, l2 in zip(rows["j"], rows["u_center"], rows["ratio"], rows["l2"]):
        out(f"{j:>4} {u:>14.6g} {q:>9.4f} {l2:>14.6g}")
    return {"verdict": rep.verdict, "label": label, "ratios": rep.ratios, "note": rep.note}, 0


def cmd_stationary(cfg, run, out):
    from . import stationary as st

    params = _params(cfg)
    s = cfg["stationary"]
    kind = s["kind"]
    if kind == "eigen":
        lam, phi = st.ball_eigenpair(params.N, s["R_stat"])
        run.csv("eigenfunction.csv", {"r": phi.r, "phi": phi.f})
        out(f"lambda1(B_{s['R_stat']:g}) = {lam:.12g}")
        return {"lambda1": lam}, 0
    h = _potential(cfg)
    if kind == "point-source":
        sol = st.solve_point_source(params, h, s["k"], r_min=s["r_min"], R=s["R_stat"])
    elif kind == "minimal":
        sol = st.minimal_large_solution(params, h, r_min=s["r_min"], R=s["R_stat"],
                                        max_doublings=s["max_doublings"])
        if not sol.meta.get("converged", False):
            out("minimal large solution: no saturation within the doubling budget")
    elif kind == "exhaustion":
        sol = st.maximal_exhaustion(params, h, s["eps"], R=s["R_stat"])
    else:
        raise UsageError(f"unknown stationary kind {kind!r}")
    run.csv("U.csv", {"r": sol.r, "U": sol.U})
    summary = {"kind": sol.kind, "k": sol.k, "flux_inner": sol.flux_inner,
               "residual": sol.residual, "converged": sol.meta.get("converged", True)}
    out(f"{sol.kind}: U(0.2) = {float(sol.profile(0.2)):.6g}, U(1) = {float(sol.profile(1.0)):.6g}")
    return summary, 0


def cmd_variational(cfg, run, out):
    from .profiles import find_vss_profile
    from .variational import compare_with_profile, gaussian_seed, minimize_J

    params = _params(cfg)
    v = cfg["variational"]
    res = minimize_J(params, gaussian_seed(params.N, 1.0, v["R_var"], v["n_var"]))
    run.csv("minimizer.csv", {"r": res.minimizer.r, "v": res.minimizer.v})
    summary = {"status": res.status, "J": res.J.to_dict(), "iterations": res.iterations,
               "el_residual": res.el_residual, "converged": res.converged}
    out(f"{res.status}: J = {res.J.total:.10g} after {res.iterations} iterations")
    if res.status == "Minimizer":
        sh = find_vss_profile(params, r_max=cfg["shooting"]["r_max"], require_supercritical=False)
        if sh.found:
            dev = compare_with_profile(res.minimizer, sh.profile)
            summary["shooting_deviation"] = dev
            out(f"sup-relative deviation from the shooting profile on [0, 4]: {dev:.3g}")
    return summary, 0


def cmd_energy(cfg, run, out):
    from .evolution import energy_functionals

    params = _params(cfg)
    h = _potential(cfg)
    fld = _evolve(cfg, params, h)
    s_vals = _floats(cfg["energy"]["s_values"])
    t_vals = [t for t in fld.times if t > 0]
    rec = energy_functionals(fld, s_vals, t_vals)
    run.csv("energies.csv", energy_columns(rec))
    g = [energy_majorant_g(h, s, params) for s in s_vals]
    ratio = (rec.I + rec.J) / (np.asarray(t_vals)[None, :] * np.asarray(g)[:, None])
    c = float(np.max(ratio))
    run.csv("majorant.csv", {"s": s_vals, "g": g})
    out(f"fitted majorant constant c = {c:.6g} over {len(s_vals)} radii x {len(t_vals)} times")
    return {"c": c}, 0


def cmd_sweep(cfg, run, out):
    sw = cfg["sweep"]
    key = sw["sweep_param"]
    command = sw["sweep_command"]
    if command not in ("profile", "blowup", "variational"):
        raise UsageError(f"sweep supports profile, blowup and variational, not {command!r}")
    sec = next((s for s in cfg if key in cfg[s]), None)
    if sec is None:
        raise UsageError(f"unknown sweep parameter {key!r}")
    index = []
    for i, val in enumerate(_floats(sw["sweep_values"])):
        sub_cfg = {s: dict(cfg[s]) for s in USED[command] if s in cfg}
        sub_cfg.setdefault(sec, dict(cfg[sec]))
        sub_cfg[sec][key] = _coerce(val, DEFAULTS[sec][key])
        sub = RunDirectory(f"{command}", sub_cfg, root=run.subdir("points"))
        out(f"[{i}] {key} = {val:g}")
        summary, _ = COMMAND_FUNCS[command](sub_cfg, sub, lambda s: out("    " + s))
        sub.finish(summary)
        index.append({"index": i, key: val, "run_id": sub.run_id,
                      "path": str(sub.path.relative_to(run.path)), "summary": summary})
    run.json("index.json", {"parameter": key, "command": command, "points": index})
    return {"points": len(index)}, 0


def cmd_validate(cfg, run, out):
    from .acceptance import run_all

    only = [int(x) for x in cfg["validate"]["only"].split(",") if x.strip()]
    results = run_all(only or None, printer=out)
    rows = [r.to_dict() for r in results]
    run.json("acceptance.json", {"criteria": rows})
    n_pass = sum(r.passed for r in results)
    out(f"{n_pass}/{len(results)} criteria pass")
    return {"passed": n_pass, "total": len(results)}, 0 if n_pass == len(results) else 1


COMMAND_FUNCS = {
    "profile": cmd_profile, "blowup": cmd_blowup, "classify": cmd_classify,
    "evolve": cmd_evolve, "dichotomy": cmd_dichotomy, "stationary": cmd_stationary,
    "variational": cmd_variational, "energy": cmd_energy, "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def run_command(argv=None, out=print) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        run = RunDirectory(args.command, cfg, root=args.out)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary, status = COMMAND_FUNCS[args.command](cfg, run, out)
        if caught:
            summary["warnings"] = sorted({str(w.message) for w in caught})
        run.finish(summary)
        out(f"outputs in {run.path}")
        return status
    except UsageError as exc:
        print(f"vsslab {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (InvalidParameterError, DomainError) as exc:
        print(f"vsslab {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except (NumericError, DivergenceError, RuntimeError) as exc:
        print(f"vsslab {args.command}: solver failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"vsslab {args.command}: I/O error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
