"""Command-line front end.

    lqrsynth run <config.yaml> [--out DIR] [--seed N] [--quiet]
    lqrsynth oracle <config.yaml> [--out DIR] [--quiet]

Exit codes: 0 success, 1 configuration error, 2 solver outcome (infeasible,
inaccurate, non-stabilizable), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .errors import (ConvergenceError, ExcitationError, InstabilityError,
                     NumericalError, RecoveryError)
from .linalg import dare_oracle, make_gain
from .modelfree import pgd_modelfree_run
from .sdp import (ConstraintSpec, build_dual_sdp, build_sdp_constrained,
                  build_sdp_design, recover_gain, solve_sdp, verify_design)
from .structured import pgd_run
from .trajectory import LinearSystemSource

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_MARKER = "--- machine-readable ---"
HISTORY_HEADER = ("t", "J", "grad_norm")
SWEEP_HEADER = ("rho", "objective", "status")


def _num(x):
    x = float(x)
    if np.isfinite(x):
        return x
    return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _csv_value(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x)) if np.isfinite(x) else ("nan" if np.isnan(x) else "inf")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_value(v) for v in row])


def format_report(report):
    lines = ["lqrsynth report",
             f"kind: {report['kind']}",
             f"status: {report['status']}"]
    if "objective" in report:
        lines.append(f"objective: {report['objective']}")
    if report.get("gain") is not None:
        lines.append(f"gain: {report['gain']}")
    ver = report.get("verification")
    if ver:
        lines.append(f"verified cost: {ver['cost']} (spectral radius {ver['spectral_radius']:.6g}, "
                     f"{'pass' if ver['passed'] else 'FAIL'})")
    if report.get("error"):
        lines.append(f"error: {report['error']}")
    lines.append(REPORT_MARKER)
    lines.append(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return "\n".join(lines) + "\n"


def parse_report(text):
    """Return the JSON section of a report written by :func:`format_report`."""
    _, _, payload = text.partition(REPORT_MARKER + "\n")
    return json.loads(payload)


def _verification(cfg, gain, spec=None):
    return verify_design(cfg.model, gain, cfg.cost, cfg.Z, spec).to_dict()


def _run_oracle(cfg, report, artifacts, timings):
    P, gain = dare_oracle(cfg.model, cfg.cost)
    report.update(status="optimal", objective=float(np.trace(P @ cfg.Z)),
                  gain=gain.F, P=P, verification=_verification(cfg, gain))
    return EXIT_OK


def _run_design(cfg, report, artifacts, timings):
    t0 = time.perf_counter()
    builder = build_sdp_design if cfg.kind == "sdp" else build_dual_sdp
    sol = solve_sdp(builder(cfg.model, cfg.cost, cfg.Z))
    timings["solve"] = time.perf_counter() - t0
    report.update(status=sol.status, objective=sol.objective,
                  solver={"status": sol.stats.get("solver_status"),
                          "iterations": sol.stats.get("iterations"),
                          "min_eigs": sol.stats.get("min_eigs")})
    if sol.status != "optimal":
        report["error"] = sol.message or f"solver finished with status {sol.status}"
        return EXIT_SOLVER
    if cfg.kind == "sdp":
        gain = recover_gain(sol)
    else:
        P = sol.values["P"]
        n = cfg.model.n
        # minimizing action of the recovered Q-function: F = -P22^{-1} P12'
        gain = make_gain(cfg.model, -np.linalg.solve(P[n:, n:], P[:n, n:].T))
        report["P"] = P
    report["gain"] = gain.F
    report["verification"] = _verification(cfg, gain)
    return EXIT_OK


def _sweep_points(lo, hi, count):
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo])


def _run_constrained(cfg, report, artifacts, timings):
    code = EXIT_OK
    if cfg.rho is not None:
        spec = ConstraintSpec(cfg.gammas, cfg.rho)
        t0 = time.perf_counter()
        sol = solve_sdp(build_sdp_constrained(cfg.model, cfg.cost, cfg.Z, spec))
        timings["solve"] = time.perf_counter() - t0
        report.update(status=sol.status, objective=sol.objective,
                      solver={"status": sol.stats.get("solver_status"),
                              "iterations": sol.stats.get("iterations"),
                              "min_eigs": sol.stats.get("min_eigs")})
        if sol.status == "optimal":
            gain = recover_gain(sol)
            report["gain"] = gain.F
            report["verification"] = _verification(cfg, gain, spec)
        else:
            report["error"] = sol.message or f"solver finished with status {sol.status}"
            code = EXIT_SOLVER
    if cfg.rho_sweep is not None:
        rows = []
        t0 = time.perf_counter()
        for rho in _sweep_points(*cfg.rho_sweep):
            s = solve_sdp(build_sdp_constrained(cfg.model, cfg.cost, cfg.Z,
                                                ConstraintSpec(cfg.gammas, rho)))
            rows.append((float(rho), s.objective, s.status))
        timings["sweep"] = time.perf_counter() - t0
        artifacts["sweep"] = (SWEEP_HEADER, rows)
        report["sweep"] = [{"rho": r, "objective": o, "status": s} for r, o, s in rows]
        if cfg.rho is None:
            ok = any(s == "optimal" for _, _, s in rows)
            report["status"] = "optimal" if ok else "infeasible"
            code = EXIT_OK if ok else EXIT_SOLVER
    return code


def _run_pgd(cfg, report, artifacts, timings):
    t0 = time.perf_counter()
    if cfg.kind == "pgd":
        z = cfg.z if cfg.z is not None else np.linalg.cholesky(cfg.Z).T
        run = pgd_run(cfg.model, cfg.cost, cfg.mask, cfg.F0, z, cfg.pgd, mode=cfg.mode)
    else:
        run = pgd_modelfree_run(LinearSystemSource(cfg.model), cfg.cost, cfg.mask,
                                cfg.F0, cfg.v_set, cfg.pgd)
    timings["descent"] = time.perf_counter() - t0
    last = run.final
    report.update(status=run.reason, objective=last.J, gain=run.gain.F,
                  iterations=run.steps, grad_norm=last.grad_norm,
                  verification=_verification(cfg, run.gain))
    artifacts["history"] = (HISTORY_HEADER, [(it.t, it.J, it.grad_norm) for it in run.iterates])
    return EXIT_OK


DISPATCH = {
    "oracle": _run_oracle,
    "sdp": _run_design,
    "dual": _run_design,
    "sdp-constrained": _run_constrained,
    "pgd": _run_pgd,
    "pgd-modelfree": _run_pgd,
}


def execute(cfg, seed=None):
    """Run a parsed config; returns (exit_code, report, artifacts, timings)."""
    report = {"kind": cfg.kind, "problem": cfg.raw, "seed": seed}
    artifacts, timings = {}, {}
    try:
        code = DISPATCH[cfg.kind](cfg, report, artifacts, timings)
    except (InstabilityError, ConvergenceError) as exc:
        report.update(status="failed", error=str(exc))
        code = EXIT_SOLVER
    except (NumericalError, ExcitationError, RecoveryError, np.linalg.LinAlgError) as exc:
        report.update(status="failed", error=str(exc))
        code = EXIT_NUMERIC
    report["exit_code"] = code
    return code, report, artifacts, timings


def _write_outputs(cfg, out, report, artifacts, timings):
    out.mkdir(parents=True, exist_ok=True)
    names = {"report": "report.txt", "history": "history.csv", "sweep": "sweep.csv"}
    names.update(cfg.outputs)
    paths = {"report": out / names["report"]}
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(report))
    for key, (header, rows) in artifacts.items():
        paths[key] = out / names[key]
        write_csv(paths[key], header, rows)
    # wall-clock numbers live apart from the report so reports stay byte-stable
    with open(out / "timings.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({k: round(v, 6) for k, v in timings.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report, artifacts, timings = execute(cfg, args.seed)
    paths = _write_outputs(cfg, Path(args.out), report, artifacts, timings)
    if not args.quiet:
        print(format_report(report).split(REPORT_MARKER)[0].rstrip())
        for key, p in paths.items():
            print(f"wrote {key}: {p}")
    return code


def cmd_oracle(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        P, gain = dare_oracle(cfg.model, cfg.cost)
    except (InstabilityError, ConvergenceError) as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    trace = float(np.trace(P @ cfg.Z))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = {"kind": "oracle", "status": "optimal", "objective": trace,
                  "gain": gain.F, "P": P, "problem": cfg.raw}
        (out / "oracle.txt").write_text(format_report(report), encoding="utf-8")
    if not args.quiet:
        with np.printoptions(precision=6, suppress=True):
            print("P* =")
            print(P)
            print("F* =")
            print(gain.F)
        print(f"trace(P* Z) = {trace:.6f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lqrsynth", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, func, default_out in (("run", cmd_run, "out"), ("oracle", cmd_oracle, None)):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="YAML problem definition")
        sp.add_argument("--out", default=default_out, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="recorded in the report; the solvers are deterministic")
        sp.add_argument("--quiet", action="store_true")
        sp.set_defaults(func=func)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
