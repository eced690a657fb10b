"""Batch command-line interface.

    pnsklab run-pnsk <config>       detailed-scale run, CSV outputs
    pnsklab run-effective <config>  effective-model run, CSV outputs
    pnsklab convergence <config>    oscillation ladder study, report.json
    pnsklab residuals <config> --equation <name>   weak-form defects

Global flags: --out <dir> (default ./out), --threads <k>, --seed <u64>.
Exit codes: 0 success, 2 configuration/validation error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import lab, reports
from .config import build_c0, build_u0, parse_config
from .effective import run_effective
from .errors import BlowUpError, PnskLabError, ValidationError
from .grid import FluidState
from .pnsk import run_pnsk
from .study import effective_initial_state, initial_states, run_convergence

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _parser():
    p = argparse.ArgumentParser(prog="pnsklab", description=__doc__)
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=1, help="ladder-run parallelism")
    p.add_argument("--seed", type=int, default=None, help="seed recorded in reports (u64)")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run-pnsk", "run-effective", "convergence"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
    sp = sub.add_parser("residuals")
    sp.add_argument("config")
    sp.add_argument(
        "--equation",
        required=True,
        choices=("continuity", "momentum", "parabolic", "renormalized", "kinetic", "cdf"),
    )
    return p


def _validate_seed(seed):
    if seed is not None and not 0 <= seed < 2 ** 64:
        raise ValidationError("--seed must be an unsigned 64-bit integer")
    return seed


def _cmd_run_pnsk(cfg, outdir):
    init = initial_states(cfg)
    traj = run_pnsk(cfg.grid, init, cfg.law, cfg.params, cfg.output_times)
    reports.write_fields_csv(outdir, cfg.grid, traj)
    reports.write_energy_csv(outdir, traj.energy_rows)
    reports.write_monitors_csv(outdir, traj)
    print(f"run-pnsk: {traj.n_steps} steps, {len(traj.times)} snapshots -> {outdir}")
    return EXIT_OK


def _cmd_run_effective(cfg, outdir):
    init = effective_initial_state(cfg)
    traj = run_effective(cfg.grid, init, cfg.law, cfg.params, cfg.output_times)
    reports.write_fields_csv(outdir, cfg.grid, traj)
    reports.write_measure_csv(outdir, cfg.grid, traj)
    reports.write_monitors_csv(outdir, traj)
    print(f"run-effective: {traj.n_steps} steps, {len(traj.times)} snapshots -> {outdir}")
    return EXIT_OK


def _cmd_convergence(cfg, outdir, threads, seed):
    report, _, _ = run_convergence(cfg, threads=threads, seed=seed)
    path = reports.write_report_json(outdir, report)
    failed = [r.n for r in report.rows if r.status != "ok"]
    print(f"convergence: {len(report.rows)} ladder rows -> {path}")
    if failed:
        print(f"warning: failed rows for n in {failed}", file=sys.stderr)
    return EXIT_OK


def _cmd_residuals(cfg, outdir, equation):
    t_end = cfg.output_times[-1] if cfg.output_times else 0.0
    tests = lab.default_tests(t_end, cfg.grid.length)
    rows = []
    if equation in ("kinetic", "cdf"):
        init = effective_initial_state(cfg)
        traj = run_effective(cfg.grid, init, cfg.law, cfg.params, cfg.output_times)
        xi_hi = 1.5 * max(cfg.oscillation.r_liq, 1.0)
        for st in tests:
            ktest = lab.kinetic_bump_test(st, 0.5 * xi_hi, 0.45 * xi_hi)
            r = lab.weak_residual(cfg.grid, traj, equation, ktest, cfg.law, cfg.params)
            rows.append((equation, ktest.name, r))
    else:
        init = initial_states(cfg)
        traj = run_pnsk(cfg.grid, init, cfg.law, cfg.params, cfg.output_times)
        b = lab.bounded_observable() if equation == "renormalized" else None
        for st in tests:
            r = lab.weak_residual(cfg.grid, traj, equation, st, cfg.law, cfg.params, b=b)
            rows.append((equation, st.name, r))
    path = reports.write_residuals_csv(outdir, rows)
    for eq, name, r in rows:
        print(f"{eq} residual vs {name}: {r:.6e}")
    print(f"residuals -> {path}")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        _validate_seed(args.seed)
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        cfg = parse_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "run-pnsk":
            return _cmd_run_pnsk(cfg, args.out)
        if args.command == "run-effective":
            return _cmd_run_effective(cfg, args.out)
        if args.command == "convergence":
            return _cmd_convergence(cfg, args.out, args.threads, args.seed)
        return _cmd_residuals(cfg, args.out, args.equation)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BlowUpError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        if exc.snapshot is not None:
            os.makedirs(args.out, exist_ok=True)
            diag = os.path.join(args.out, "blowup_snapshot.csv")
            snap = exc.snapshot
            rho = getattr(snap, "rho", None)
            if rho is not None:
                np.savetxt(diag, np.column_stack([rho]), header="rho", comments="")
                print(f"diagnostic snapshot -> {diag}", file=sys.stderr)
        return EXIT_RUNTIME
    except PnskLabError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
