"""Detailed-scale solver: donor-cell continuity transport composed with the
shared momentum / order-parameter steppers, plus run-level diagnostics
(mass, energy ledger, mean-of-c relaxation, density norm monitors).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import grid as grd
from . import hydro, pressure
from .errors import BlowUpError, CourantError, ValidationError

_SNAP_TOL = 1e-12


def step_continuity(grid, state, params, dt):
    """Donor-cell upwind update of the density; conservative flux form.

    Boundary fluxes vanish (no-slip), so total mass telescopes exactly and
    the update is positivity preserving under the face Courant bound
    |u| dt / dx <= 1.
    """
    u = state.u
    courant = np.max(np.abs(u)) * dt / grid.dx
    if courant > 1.0 + 1e-12:
        raise CourantError(f"continuity step rejected: face Courant {courant:.3f} > 1")
    rho = state.rho
    flux = np.zeros(grid.n_cells + 1)
    inner_u = u[1:-1]
    flux[1:-1] = np.where(inner_u > 0.0, rho[:-1], rho[1:]) * inner_u
    return rho - (dt / grid.dx) * np.diff(flux)


def sound_speed(law, rho):
    """sqrt(max(Peff'(rho), 0)); the artificial pressure may be non-monotone."""
    return np.sqrt(np.maximum(pressure.evaluate(law, rho, "dPeff"), 0.0))


def dt_cfl(grid, rho, u, law, params):
    """Hyperbolic step bound dt = cfl * dx / (max|u| + max c_s), capped at dt_max."""
    speed = np.max(np.abs(u)) + np.max(sound_speed(law, rho))
    if speed <= 0.0 or not np.isfinite(speed):
        return params.dt_max
    return min(params.dt_max, params.cfl * grid.dx / speed)


def step_pnsk(grid, state, law, params, dt):
    """One full detailed-scale step: continuity -> momentum -> order parameter.

    The momentum substep sees the transported density and the artificial
    pressure Peff evaluated on it.
    """
    rho_new = step_continuity(grid, state, params, dt)
    peff = pressure.evaluate(law, rho_new, "Peff")
    u_new = hydro.step_momentum(grid, state, peff, params, dt, rho_new=rho_new)
    c_new = hydro.step_order_parameter(grid, rho_new, state.c, params, dt)
    return grd.FluidState(rho_new, u_new, c_new, state.t + dt)


def c_mean_reference(m_c0, m_rho, params, t):
    """Exact mean-of-c relaxation m_rho + (m_c0 - m_rho) exp(-(alpha/beta) t).

    Follows from integrating the order-parameter equation over the domain
    with zero-flux walls and a mass-conserving density.
    """
    if t < 0.0:
        raise ValidationError("time must be non-negative")
    return m_rho + (m_c0 - m_rho) * np.exp(-(params.alpha / params.beta) * t)


@dataclass
class PnskTrajectory:
    """Snapshots at the requested output times plus per-step monitors."""

    grid: object
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    mass_history: list = field(default_factory=list)
    min_rho_history: list = field(default_factory=list)
    c_mean_history: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    energy_rows: list = None
    monitors: dict = field(default_factory=dict)
    n_steps: int = 0
    runtime_s: float = 0.0

    @property
    def snapshots(self):
        return list(zip(self.times, self.states))


def _norm_exponents(law):
    """(gamma_tilde, theta, delta) controlling the density norm monitors."""
    gt = law.gamma_tilde
    theta = min((2.0 * gt - 3.0) / 3.0, 1.0)
    delta = (gt + theta) / gt
    return gt, theta, delta


def run_pnsk(grid, init, law, params, output_times, track_energy=True):
    """Advance the detailed model, landing on each output time exactly.

    Records per step: mass, min density, mean of c, energy ledger, and the
    space-time density norms || rho ||_{L^inf L^gt}, || rho ||_{L^(gt+theta)}
    and || Peff(rho) ||_{L^delta}. Aborts with a diagnostic snapshot on any
    non-finite field.
    """
    init.validate(grid)
    output_times = sorted(float(t) for t in output_times)
    if output_times and output_times[0] < 0.0:
        raise ValidationError("output times must be non-negative")
    t_start = time.perf_counter()
    gt, theta, delta = _norm_exponents(law)

    traj = PnskTrajectory(grid)
    state = init.copy()
    acc = hydro.EnergyAccumulator(grid, law, params, state) if track_energy else None
    if track_energy:
        traj.energy_rows = acc.rows

    mass0 = grd.integrate(grid, state.rho)
    linf_lgt = grd.integrate(grid, state.rho ** gt) ** (1.0 / gt)
    int_rho_pow = 0.0
    int_peff_pow = 0.0

    def record_step(dt):
        traj.step_times.append(state.t)
        traj.mass_history.append(grd.integrate(grid, state.rho))
        traj.min_rho_history.append(float(np.min(state.rho)))
        traj.c_mean_history.append(grd.integrate(grid, state.c) / grid.length)
        traj.dt_history.append(dt)

    record_step(0.0)
    if not output_times or output_times[0] > state.t + _SNAP_TOL:
        traj.times.append(state.t)
        traj.states.append(state.copy())
    for t_out in output_times:
        while state.t < t_out - _SNAP_TOL:
            dt = dt_cfl(grid, state.rho, state.u, law, params)
            dt = min(dt, t_out - state.t)
            new_state = step_pnsk(grid, state, law, params, dt)
            if not (
                np.all(np.isfinite(new_state.rho))
                and np.all(np.isfinite(new_state.u))
                and np.all(np.isfinite(new_state.c))
            ):
                raise BlowUpError(
                    f"non-finite field at t = {new_state.t:.6g}", t=state.t, snapshot=state
                )
            if track_energy:
                acc.update(state, new_state, dt)
            state = new_state
            traj.n_steps += 1
            record_step(dt)
            linf_lgt = max(linf_lgt, grd.integrate(grid, state.rho ** gt) ** (1.0 / gt))
            int_rho_pow += dt * grd.integrate(grid, state.rho ** (gt + theta))
            peff = pressure.evaluate(law, state.rho, "Peff")
            int_peff_pow += dt * grd.integrate(grid, np.abs(peff) ** delta)
        snap = state.copy()
        snap.t = t_out
        traj.times.append(t_out)
        traj.states.append(snap)

    traj.monitors = {
        "gamma": law.gamma,
        "gamma_tilde": gt,
        "theta": theta,
        "delta": delta,
        "mass0": mass0,
        "E0": acc.e0 if track_energy else None,
        "rho_linf_lgamma_tilde": linf_lgt,
        "rho_space_time_norm": int_rho_pow ** (1.0 / (gt + theta)),
        "peff_space_time_norm": int_peff_pow ** (1.0 / delta),
    }
    traj.runtime_s = time.perf_counter() - t_start
    return traj
