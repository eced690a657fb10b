"""Convergence study driver: run the detailed model over an oscillation
ladder against one effective run from the limit measure, and collect the
weak-distance / flux-gap / norm-monitor table.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from . import lab
from .effective import EffectiveState, run_effective
from .errors import PnskLabError
from .grid import FluidState
from .pnsk import run_pnsk, _norm_exponents

SCHEMA_VERSION = 1


@dataclass
class ConvergenceRow:
    n: int
    status: str = "ok"
    distances: dict = field(default_factory=dict)
    evf_gap: float = None
    monitors: dict = field(default_factory=dict)
    n_steps: int = 0
    runtime_s: float = 0.0


@dataclass
class ConvergenceReport:
    schema_version: int
    exponents: dict
    window_h: float
    n_cells: int
    observables: tuple
    rows: list
    effective: dict
    effective_runtime_s: float = 0.0
    seed: int = None

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "exponents": self.exponents,
            "window_h": self.window_h,
            "n_cells": self.n_cells,
            "observables": list(self.observables),
            "seed": self.seed,
            "effective": self.effective,
            "rows": [
                {
                    "n": r.n,
                    "status": r.status,
                    "distances": r.distances,
                    "evf_gap": r.evf_gap,
                    "monitors": r.monitors,
                    "n_steps": r.n_steps,
                }
                for r in self.rows
            ],
            "timing": {
                "rows_runtime_s": [r.runtime_s for r in self.rows],
                "effective_runtime_s": self.effective_runtime_s,
                "total_runtime_s": sum(r.runtime_s for r in self.rows) + self.effective_runtime_s,
            },
        }


def initial_states(cfg, n_interfaces=None):
    """Shared (u0, c0) plus the n-dependent oscillating density.

    The velocity and order-parameter data are n-independent by design; the
    mean-density option uses the exact mixture mean so it matches the
    limit-measure density for every n.
    """
    rho0 = lab.gen_oscillating_density(cfg.grid, cfg.oscillation, n_interfaces)
    u0 = cfgmod.build_u0(cfg)
    if cfg.c0_spec["kind"] == "mean-density":
        c0 = np.full(cfg.grid.n_cells, cfg.oscillation.mean_density)
    else:
        c0 = cfgmod.build_c0(cfg, rho0)
    return FluidState(rho0, u0, c0, 0.0)


def effective_initial_state(cfg):
    m0 = lab.limit_measure(cfg.oscillation.theta, cfg.oscillation.r_vap, cfg.oscillation.r_liq)
    u0 = cfgmod.build_u0(cfg)
    if cfg.c0_spec["kind"] == "match-density":
        c0 = np.full(cfg.grid.n_cells, cfg.oscillation.mean_density)
    elif cfg.c0_spec["kind"] == "uniform":
        c0 = np.full(cfg.grid.n_cells, float(cfg.c0_spec.get("value", 1.0)))
    else:
        c0 = np.full(cfg.grid.n_cells, cfg.oscillation.mean_density)
    return EffectiveState.from_uniform_measure(cfg.grid, m0, u0, c0, cfg.law)


def run_convergence(cfg, threads=1, seed=None):
    """Run the ladder and assemble the report.

    Ladder runs may execute on a thread pool; all reductions happen in
    ladder order on the calling thread, so the report is deterministic for
    a fixed configuration. Failed rows carry their error message and leave
    the remaining rows intact.
    """
    grid, law, params = cfg.grid, cfg.law, cfg.params
    observables = [lab.observable_by_name(name, law) for name in cfg.observables]
    gt, theta, delta = _norm_exponents(law)

    eff_t0 = time.perf_counter()
    eff_traj = run_effective(grid, effective_initial_state(cfg), law, params, cfg.output_times)
    eff_runtime = time.perf_counter() - eff_t0

    def detailed_run(n):
        t0 = time.perf_counter()
        init = initial_states(cfg, n)
        traj = run_pnsk(grid, init, law, params, cfg.output_times)
        return traj, time.perf_counter() - t0

    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {n: pool.submit(detailed_run, n) for n in cfg.n_ladder}
        for n, fut in futures.items():
            try:
                results[n] = fut.result()
            except PnskLabError as exc:
                results[n] = exc
    else:
        for n in cfg.n_ladder:
            try:
                results[n] = detailed_run(n)
            except PnskLabError as exc:
                results[n] = exc

    rows = []
    for n in cfg.n_ladder:
        row = ConvergenceRow(n=n)
        outcome = results[n]
        if isinstance(outcome, PnskLabError):
            row.status = f"failed: {outcome}"
            rows.append(row)
            continue
        traj, runtime = outcome
        row.runtime_s = runtime
        row.n_steps = traj.n_steps
        for obs in observables:
            row.distances[obs.name] = lab.trajectory_weak_distance(
                grid, traj, eff_traj, obs, law, cfg.window_h
            )
        row.evf_gap = lab.evf_gap(
            grid, traj, eff_traj, law, params, lab.bounded_observable(), cfg.window_h
        )
        row.monitors = {
            "E0": traj.monitors["E0"],
            "rho_linf_lgamma_tilde": traj.monitors["rho_linf_lgamma_tilde"],
            "rho_space_time_norm": traj.monitors["rho_space_time_norm"],
            "peff_space_time_norm": traj.monitors["peff_space_time_norm"],
            "mass_drift": abs(traj.mass_history[-1] - traj.mass_history[0]),
            "min_rho": min(traj.min_rho_history),
        }
        rows.append(row)

    report = ConvergenceReport(
        schema_version=SCHEMA_VERSION,
        exponents={"gamma": law.gamma, "gamma_tilde": gt, "theta": theta, "delta": delta},
        window_h=cfg.window_h,
        n_cells=grid.n_cells,
        observables=cfg.observables,
        rows=rows,
        effective={
            "n_steps": eff_traj.n_steps,
            "max_normalization_defect": max(eff_traj.defect_history, default=0.0),
            "max_atom_count": max(eff_traj.atom_count_history, default=0),
        },
        effective_runtime_s=eff_runtime,
        seed=seed,
    )
    return report, eff_traj, {n: results[n][0] for n in cfg.n_ladder if not isinstance(results[n], PnskLabError)}
