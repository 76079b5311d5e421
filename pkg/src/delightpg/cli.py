"""Command-line front end.

    delightpg flow | sweep | mdp-run | verify | counterexample
        [--config PATH] [--seed N] [--out DIR] [--gate {pg,eg,dg}]
        [--eta X] [--dt X] [--max-time X]

Options come from the JSON config first and are overridden by flags.
Exit codes: 0 success, 1 config error, 2 verification failure,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import counterexample as cx
from .bandit import BanditInstance, check_policy, logits_from_policy
from .dynamics import GATE_KINDS, GateSpec
from .errors import InsufficientDataError, InvalidInputError, NumericalAbort
from .flow import (SWEEP_GAPS, SWEEP_THETA0, FlowConfig, gap_sweep, integrate, sweep_slopes,
                   sweep_to_csv, trajectory_to_csv)
from .mdp import (MdpPolicy, TabularMdp, corner_policy, dg_updater, eg_updater, load_mdp,
                  mdp_telescope_constant, mdp_telescope_violations, optimal_policy, random_mdp,
                  run_mdp_to_convergence)
from .suites import SUITES, run_suite
from .verify import _jsonable, escape_time_bound, fit_rate

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_ABORT = 0, 1, 2, 3

COMMON = {"seed": 0, "out": "out"}
DEFAULTS = {
    "flow": {"rewards": [1.0, 0.9, 0.1], "pi0": [0.01, 0.05, 0.94], "theta0": None,
             "gates": ["pg", "dg"], "eta": 1.0, "dt": 1.0, "max_time": 10_000.0, "record_every": 1},
    "sweep": {"gaps": list(SWEEP_GAPS), "theta0": list(SWEEP_THETA0), "gates": ["pg", "dg"],
              "eta": 1.0, "dt": 1.0, "max_time": 10_000_000.0, "workers": 1},
    "mdp-run": {"mdp": None, "n_states": 5, "n_actions": 3, "gamma": None, "gate": "eg", "eta": 1.0,
                "alpha": 1.0, "init": "corner", "tol": None, "tv_tol": 1e-3, "max_iters": 200_000},
    "verify": {"suite": "bandit", "samples": 2000, "n_random": 5},
    "counterexample": {"eta": 1.0, "n_grid": 10_000, "etas": [0.1, 0.5, 1.0, 2.0, 5.0]},
}


class ConfigError(Exception):
    pass


def _fmt_float(x):
    return repr(float(x))


def load_config(command: str, path: str | None, overrides: dict) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    allowed = set(cfg)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc.pop("command", None)
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        cfg.update(doc)
    for k, v in overrides.items():
        if v is None:
            continue
        if k == "gate":
            key = "gate" if "gate" in allowed else "gates"
            if key not in allowed:
                raise ConfigError(f"--gate does not apply to {command}")
            cfg[key] = v if key == "gate" else [v]
        else:
            if k not in allowed:
                raise ConfigError(f"--{k.replace('_', '-')} does not apply to {command}")
            cfg[k] = v
    return cfg


def _gate(name: str, eta: float) -> GateSpec:
    if name not in GATE_KINDS:
        raise ConfigError(f"gate: unknown gate {name!r}")
    return GateSpec(name, eta)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _report(command: str, cfg: dict, results: dict) -> dict:
    return {"tool": "delightpg", "version": __version__, "command": command, "seed": cfg["seed"],
            "config": cfg, "results": results}


# ------------------------------------------------------------------ commands

def cmd_flow(cfg: dict) -> int:
    try:
        b = BanditInstance(np.asarray(cfg["rewards"], dtype=float))
        if cfg["theta0"] is not None:
            theta0 = np.asarray(cfg["theta0"], dtype=float)
        else:
            theta0 = logits_from_policy(check_policy(cfg["pi0"], b.K, atol=1e-9))
        gates = [_gate(g, float(cfg["eta"])) for g in cfg["gates"]]
        fc = {g.kind: FlowConfig(float(cfg["dt"]), float(cfg["max_time"]), g, int(cfg["record_every"]))
              for g in gates}
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out"])
    pi0 = np.exp(theta0 - theta0.max())
    pi0 /= pi0.sum()
    opt = b.optimal_arm
    corner = int(np.argmax(np.where(np.arange(b.K) == opt, -np.inf, theta0)))
    eps0 = 1.0 - pi0[corner]
    in_sector = bool(pi0[opt] >= eps0 / b.K and pi0[opt] < pi0[corner])
    summary = []
    for g in gates:
        tr = integrate(b, theta0, fc[g.kind], optimal=opt, corner=corner)
        _write(out, f"flow_{g.kind}.csv", trajectory_to_csv(tr))
        bound = escape_time_bound(b, corner, pi0) if (g.kind == "eg" and in_sector) else math.nan
        summary.append({"gate": g.label(), "corner": corner, "escaped": tr.escaped,
                        "escape_time": tr.escape_time if tr.escaped else math.nan, "escape_bound": bound})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["gate", "corner", "escaped", "escape_time", "escape_bound"]
    w.writerow(cols)
    for row in summary:
        w.writerow([("" if isinstance(row[c], float) and math.isnan(row[c]) else
                     _fmt_float(row[c]) if isinstance(row[c], float) else row[c]) for c in cols])
    _write(out, "flow_summary.csv", buf.getvalue())
    _write(out, "flow_report.json", _dump(_report("flow", cfg, {"gates": summary})))
    for row in summary:
        print(f"{row['gate']}: escaped={row['escaped']} escape_time={row['escape_time']}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    try:
        gates = [_gate(g, float(cfg["eta"])) for g in cfg["gates"]]
        fc = FlowConfig(float(cfg["dt"]), float(cfg["max_time"]))
        rows = gap_sweep(cfg["gaps"], cfg["theta0"], gates, fc, workers=int(cfg["workers"]))
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out"])
    _write(out, "sweep.csv", sweep_to_csv(rows))
    slopes = {"all": sweep_slopes(rows), "last4": sweep_slopes(rows, last=4)}
    failures = [{"method": r.method, "gap": r.gap, "error": r.error} for r in rows if r.error]
    _write(out, "sweep_summary.json", _dump(_report("sweep", cfg, {"slopes": slopes, "row_errors": failures})))
    for m, s in slopes["all"].items():
        print(f"{m}: log-log slope {s:.3f} (last four gaps {slopes['last4'].get(m, float('nan')):.3f})")
    return EXIT_OK


def cmd_mdp_run(cfg: dict) -> int:
    rng = np.random.default_rng(int(cfg["seed"]))
    try:
        if cfg["mdp"] is None:
            m = random_mdp(rng, int(cfg["n_states"]), int(cfg["n_actions"]), cfg["gamma"])
        elif isinstance(cfg["mdp"], dict):
            m = TabularMdp.from_dict(cfg["mdp"])
        else:
            m = load_mdp(cfg["mdp"])
        opt = optimal_policy(m)
        if cfg["init"] == "corner":
            pol0 = corner_policy(m, (opt.actions + 1) % m.n_actions)
        elif cfg["init"] == "uniform":
            pol0 = MdpPolicy.uniform(m)
        else:
            raise ConfigError("init: expected 'corner' or 'uniform'")
        eta, alpha = float(cfg["eta"]), float(cfg["alpha"])
        if cfg["gate"] == "eg":
            upd = eg_updater(eta)
        elif cfg["gate"] == "dg":
            upd = dg_updater(alpha, eta)
        else:
            raise ConfigError("gate: mdp-run supports eg and dg")
        if not (eta > 0 and alpha > 0):
            raise ConfigError("eta and alpha must be positive")
    except (InvalidInputError, TypeError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from exc
    tol = math.inf if cfg["tol"] is None else float(cfg["tol"])
    tv_tol = None if cfg["tv_tol"] is None else float(cfg["tv_tol"])
    rec = run_mdp_to_convergence(m, pol0, upd, tol=tol, max_iters=int(cfg["max_iters"]), tv_tol=tv_tol)
    out = Path(cfg["out"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "delta", "d_min"])
    for t, (d, dm) in enumerate(zip(rec.deltas, rec.d_min)):
        w.writerow([t, _fmt_float(d), _fmt_float(dm)])
    _write(out, "mdp_run.csv", buf.getvalue())
    try:
        fit = fit_rate(rec.deltas)
        fit_d = {"slope": fit.slope, "r_squared": fit.r_squared, "T0": fit.T0_estimate,
                 "loglog_exponent": fit.loglog_exponent, "super_linear": fit.super_linear}
    except (InsufficientDataError, InvalidInputError) as exc:
        fit_d = {"error": str(exc)}
    c = mdp_telescope_constant(m, eta, float(rec.d_min.min()))
    res = {"converged": rec.converged, "iterations": rec.iterations, "final_delta": rec.final_delta,
           "max_tv": rec.max_tv, "optimal_actions": opt.actions.tolist(),
           "min_d_rho": float(rec.d_min.min()), "rate_fit": fit_d,
           "telescope_violations": mdp_telescope_violations(rec, c) if cfg["gate"] == "eg" else None}
    cfg_out = dict(cfg)
    if cfg["mdp"] is None:
        cfg_out["generated_mdp"] = m.to_dict()
    _write(out, "mdp_run.json", _dump(_report("mdp-run", cfg_out, res)))
    print(f"converged={rec.converged} iterations={rec.iterations} max_tv={rec.max_tv:.3e}")
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    suite = cfg["suite"]
    if suite not in SUITES:
        raise ConfigError(f"suite: expected one of {SUITES}")
    kw = {}
    if suite == "bandit":
        kw = {"samples": int(cfg["samples"]), "n_random": int(cfg["n_random"])}
    rep = run_suite(suite, int(cfg["seed"]), **kw)
    _write(Path(cfg["out"]), f"verify_{suite}.json", _dump(_report("verify", cfg, rep)))
    for c in rep["checks"]:
        tag = "PASS" if c["passed"] else ("FAIL" if c["gating"] else "note")
        print(f"[{tag}] {c['name']}")
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def cmd_counterexample(cfg: dict) -> int:
    try:
        eta = float(cfg["eta"])
        n = int(cfg["n_grid"])
        if not eta > 0 or n < 2:
            raise ValueError("eta must be positive and n_grid >= 2")
        reports = {m: cx.find_fixed_points(m, eta).to_dict() for m in cx.METHODS}
        sweep = cx.eta_sweep(cfg["etas"])
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ablation = cx.find_fixed_points("eg", inst=cx.SharedParamInstance(r_s2_a1=100.0)).to_dict()
    out = Path(cfg["out"])
    _write(out, "counterexample_grid.csv", cx.grid_to_csv(n, eta))
    _write(out, "counterexample.json", _dump(_report("counterexample", cfg, {
        "fixed_points": reports, "dg_eta_sweep": sweep, "ablation_r_s2_a1_plus_100": ablation})))
    for m, r in reports.items():
        print(f"{m}: roots={r['roots']} stable={r['stable']}")
    return EXIT_OK


COMMANDS = {"flow": cmd_flow, "sweep": cmd_sweep, "mdp-run": cmd_mdp_run, "verify": cmd_verify,
            "counterexample": cmd_counterexample}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delightpg", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--gate", choices=GATE_KINDS)
        p.add_argument("--eta", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--max-time", dest="max_time", type=float)
        if name == "verify":
            p.add_argument("--suite", choices=SUITES)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    overrides = {"seed": args.seed, "out": args.out, "gate": args.gate, "eta": args.eta,
                 "dt": args.dt, "max_time": args.max_time}
    if args.command == "verify":
        overrides["suite"] = args.suite
    try:
        cfg = load_config(args.command, args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
