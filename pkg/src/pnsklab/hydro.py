"""Momentum and order-parameter steppers shared by both solvers, plus the
energy functional and the step-by-step energy budget.

One full time step is operator-split: continuity (owned by the detailed or
effective solver) -> momentum -> order parameter. The pressure and the
density coupling term are explicit; the viscous term and the whole
order-parameter equation are backward Euler, so the only linear algebra is
a pair of symmetric tridiagonal solves per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import grid as grd
from . import pressure
from .errors import ValidationError

# velocity reconstruction floor for near-vacuum faces
VACUUM_FLOOR = 1e-12


@dataclass
class Params:
    """Physical coefficients and numerical controls for a run."""

    mu: float
    lambda_: float
    kappa: float
    alpha: float
    beta: float
    cfl: float = 0.4
    dt_max: float = 1e-2
    t_end: float = 0.25
    renorm_tol: float = 1e-6
    atom_merge_eps: float = None  # default: 1e-6 * measure support width
    max_atoms: int = 64

    def __post_init__(self):
        for name in ("mu", "lambda_", "kappa", "alpha", "beta"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"physics.{name.rstrip('_')} must be positive")
        if not 0.0 < self.cfl <= 1.0:
            raise ValidationError("numerics.cfl must lie in (0, 1]")
        if not self.dt_max > 0.0:
            raise ValidationError("numerics.dt_max must be positive")
        if self.t_end < 0.0:
            raise ValidationError("numerics.t_end must be non-negative")

    @property
    def viscosity_total(self):
        """1D combination lambda + 2 mu multiplying u_xx in the momentum equation."""
        return self.lambda_ + 2.0 * self.mu


@dataclass
class EnergyReport:
    """Total energy and its four parts; dissipation fields are cumulative."""

    E: float
    kinetic: float
    potential_W: float
    coupling: float
    gradient: float
    dissipation_visc: float = 0.0
    dissipation_c: float = 0.0
    E0: float = field(default=None)


def _solve_tridiag_spd(diag, off, rhs):
    """Symmetric positive definite tridiagonal solve (banded Cholesky)."""
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1, :] = diag
    return linalg.solveh_banded(ab, rhs, lower=False)


def step_momentum(grid, state, pressure_field, params, dt, rho_new=None):
    """One momentum step: explicit upwinded advection, explicit pressure and
    density-coupling forces, backward-Euler viscosity.

    The starting face momenta pair the state's density with its velocity;
    after the conservative flux update the velocity is reconstructed
    against ``rho_new`` (the transported density of the same step, default
    the state's own), which keeps mass and momentum advection consistent.
    ``pressure_field`` is a centered field (Peff(rho) for the detailed
    model, the measure average for the effective one). Returns the new face
    velocity with the boundary entries exactly zero.
    """
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    rho, u, c = state.rho, state.u, state.c
    if rho_new is None:
        rho_new = rho
    p = grd._require_center(grid, pressure_field)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u)) and np.all(np.isfinite(c)) and np.all(np.isfinite(p))):
        raise ValidationError("non-finite input to momentum step")
    dx = grid.dx

    rho_f = grd.face_average(grid, rho)
    rho_f_new = grd.face_average(grid, rho_new)
    floored = rho_f_new < VACUUM_FLOOR
    rho_f_safe = np.maximum(rho_f_new, VACUUM_FLOOR)
    m = rho_f * u  # face momenta; 0 at boundaries by no-slip

    # donor-cell momentum flux through cell centers
    u_c = grd.center_average(grid, u)
    m_up = np.where(u_c > 0.0, m[:-1], m[1:])
    flux = u_c * m_up

    m_star = m.copy()
    m_star[1:-1] -= (dt / dx) * np.diff(flux)
    m_star[1:-1] -= (dt / dx) * np.diff(p)
    m_star[1:-1] += dt * params.alpha * rho_f_new[1:-1] * np.diff(c) / dx
    m_star[floored] = 0.0

    # backward Euler viscosity: (rho_f_new - dt K d_xx) u_new = m_star, u = 0 on walls
    k_visc = params.viscosity_total
    r = dt * k_visc / dx ** 2
    diag = rho_f_safe[1:-1] + 2.0 * r
    off = np.full(grid.n_cells - 2, -r)
    u_new = np.zeros_like(u)
    u_new[1:-1] = _solve_tridiag_spd(diag, off, m_star[1:-1])
    if not np.all(np.isfinite(u_new)):
        raise ValidationError("momentum solve produced non-finite velocity")
    return u_new


def step_order_parameter(grid, rho, c_old, params, dt):
    """Backward-Euler solve of beta dc/dt - kappa c_xx + alpha (c - rho) = 0.

    Zero-flux ghosts at both walls; unconditionally stable.
    """
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    rho = grd._require_center(grid, rho)
    c_old = grd._require_center(grid, c_old)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(c_old))):
        raise ValidationError("non-finite input to order-parameter step")
    dx = grid.dx
    r = params.kappa / dx ** 2
    base = params.beta / dt + params.alpha
    diag = np.full(grid.n_cells, base + 2.0 * r)
    diag[0] -= r  # mirrored ghost removes one neighbor coupling
    diag[-1] -= r
    off = np.full(grid.n_cells - 1, -r)
    rhs = (params.beta / dt) * c_old + params.alpha * rho
    return _solve_tridiag_spd(diag, off, rhs)


def kinetic_energy_density(grid, rho, u):
    """0.5 rho u^2 at centers, with u^2 face-averaged onto centers."""
    u2_c = 0.5 * (u[:-1] ** 2 + u[1:] ** 2)
    return 0.5 * rho * u2_c


def total_energy(grid, state, law, params, e0=None):
    """Energy functional E = int( 0.5 rho u^2 + W(rho) + (alpha/2)(rho-c)^2
    + (kappa/2)(c_x)^2 ) dx via the midpoint rule.

    Face quantities (u^2 and c_x^2) are averaged onto centers first. The
    potential part W(rho) may be negative on (0, 1) for admissible laws;
    the other three parts are non-negative.
    """
    rho, u, c = state.rho, state.u, state.c
    kin = grd.integrate(grid, kinetic_energy_density(grid, rho, u))
    pot = grd.integrate(grid, pressure.potential(law, rho))
    coup = grd.integrate(grid, 0.5 * params.alpha * (rho - c) ** 2)
    cx = grd.grad_center_to_face(grid, c)
    cx2_c = 0.5 * (cx[:-1] ** 2 + cx[1:] ** 2)
    grad = grd.integrate(grid, 0.5 * params.kappa * cx2_c)
    e = kin + pot + coup + grad
    return EnergyReport(e, kin, pot, coup, grad, E0=e if e0 is None else e0)


class EnergyAccumulator:
    """Per-step energy ledger: E(t), cumulative dissipation, defect.

    The viscous dissipation integrand (lambda + 2 mu)|u_x|^2 and the
    relaxation integrand beta |dc/dt|^2 are accumulated with end-of-step
    velocity and the backward difference of c, matching the implicit
    substeps.
    """

    def __init__(self, grid, law, params, init_state):
        self.grid = grid
        self.law = law
        self.params = params
        rep = total_energy(grid, init_state, law, params)
        self.e0 = rep.E
        self.cum_visc = 0.0
        self.cum_c = 0.0
        self.rows = [self._row(init_state.t, rep)]

    def _row(self, t, rep):
        defect = rep.E + self.cum_visc + self.cum_c - self.e0
        return {
            "t": t,
            "E": rep.E,
            "kinetic": rep.kinetic,
            "potential_W": rep.potential_W,
            "coupling": rep.coupling,
            "gradient": rep.gradient,
            "dissipation_visc": self.cum_visc,
            "dissipation_c": self.cum_c,
            "defect": defect,
        }

    def update(self, state_old, state_new, dt):
        g, p = self.grid, self.params
        divu = grd.div_face_to_center(g, state_new.u)
        self.cum_visc += dt * grd.integrate(g, p.viscosity_total * divu ** 2)
        dcdt = (state_new.c - state_old.c) / dt
        self.cum_c += dt * grd.integrate(g, p.beta * dcdt ** 2)
        rep = total_energy(g, state_new, self.law, p, e0=self.e0)
        self.rows.append(self._row(state_new.t, rep))
        return self.rows[-1]

    def max_abs_defect(self):
        return max(abs(r["defect"]) for r in self.rows)


def energy_budget(trajectory, law=None, params=None):
    """Return the per-step energy ledger of a trajectory.

    Runs store the ledger while stepping; this accessor validates and
    returns it. Trajectories of fewer than two states carry no budget.
    """
    rows = getattr(trajectory, "energy_rows", None)
    if rows is None or len(rows) < 2:
        raise ValidationError("energy budget needs a trajectory of >= 2 states")
    return rows
