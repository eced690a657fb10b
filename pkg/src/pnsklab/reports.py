"""CSV/JSON persistence of trajectories, ledgers and convergence reports.

File formats (all floats written in shortest round-trip form, so identical
runs produce identical bytes):

  fields_####.csv   t, x, rho, u_center, c          one file per snapshot
  measure_####.csv  t, x_cell, atom, weight, xi     effective runs only
  energy.csv        t, E, kinetic, potential_W, coupling, gradient,
                    dissipation_visc, dissipation_c, defect
  monitors.csv      per-step scalars of one run
  report.json       schema-versioned convergence report
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from . import grid as grd


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_fields_csv(outdir, grid, traj, prefix="fields"):
    paths = []
    x = grid.centers()
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        u_c = grd.center_average(grid, state.u)
        rows = [
            (_fmt(t), _fmt(xi), _fmt(r), _fmt(u), _fmt(c))
            for xi, r, u, c in zip(x, state.rho, u_c, state.c)
        ]
        path = os.path.join(outdir, f"{prefix}_{k:04d}.csv")
        _write_csv(path, ("t", "x", "rho", "u_center", "c"), rows)
        paths.append(path)
    return paths


def write_measure_csv(outdir, grid, traj, prefix="measure"):
    paths = []
    x = grid.centers()
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        nu = state.nu
        order = np.lexsort((nu.xi, nu.cell))
        rows = []
        atom_idx = 0
        prev_cell = -1
        for j in order:
            cell = int(nu.cell[j])
            atom_idx = atom_idx + 1 if cell == prev_cell else 0
            prev_cell = cell
            rows.append((_fmt(t), _fmt(x[cell]), atom_idx, _fmt(nu.w[j]), _fmt(nu.xi[j])))
        path = os.path.join(outdir, f"{prefix}_{k:04d}.csv")
        _write_csv(path, ("t", "x_cell", "atom", "weight", "xi"), rows)
        paths.append(path)
    return paths


def write_energy_csv(outdir, energy_rows, name="energy.csv"):
    header = (
        "t",
        "E",
        "kinetic",
        "potential_W",
        "coupling",
        "gradient",
        "dissipation_visc",
        "dissipation_c",
        "defect",
    )
    rows = [tuple(_fmt(row[k]) for k in header) for row in energy_rows]
    path = os.path.join(outdir, name)
    _write_csv(path, header, rows)
    return path


def write_monitors_csv(outdir, traj, name="monitors.csv"):
    path = os.path.join(outdir, name)
    have_min_rho = hasattr(traj, "min_rho_history") and traj.min_rho_history
    header = ["step", "t", "dt", "mass", "c_mean"]
    if have_min_rho:
        header.append("min_rho")
    if getattr(traj, "defect_history", None):
        header.append("normalization_defect")
    rows = []
    defects = list(getattr(traj, "defect_history", []) or [])
    for k, t in enumerate(traj.step_times):
        row = [k, _fmt(t), _fmt(traj.dt_history[k]), _fmt(traj.mass_history[k]), _fmt(traj.c_mean_history[k])]
        if have_min_rho:
            row.append(_fmt(traj.min_rho_history[k]))
        if defects:
            # defects start at step 1; pad the initial record
            row.append(_fmt(defects[k - 1] if 0 < k <= len(defects) else 0.0))
        rows.append(tuple(row))
    _write_csv(path, tuple(header), rows)
    return path


def write_report_json(outdir, report, name="report.json"):
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_residuals_csv(outdir, rows, name="residuals.csv"):
    """rows: (equation, test_name, residual)."""
    path = os.path.join(outdir, name)
    _write_csv(path, ("equation", "test_function", "residual"), [(e, n, _fmt(r)) for e, n, r in rows])
    return path
