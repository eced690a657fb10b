"""Experiment layer: oscillating initial data, the limit measure, the
weak-convergence probe, the effective-viscous-flux functional and the
space-time weak-form residual evaluator.

Weak-* convergence has no canonical finite-dimensional metric; the probe
used here is the L2 norm of the box-mollified difference with a fixed
window, i.e. testing against a fixed family of bump averages. The window
must stay fixed along an oscillation ladder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as grd
from . import pressure
from .effective import EffectiveState, EffectiveTrajectory
from .errors import ValidationError
from .measure import AtomicMeasure, q_drift_values

# ---------------------------------------------------------------------------
# oscillating initial data and its weak-* limit


@dataclass(frozen=True)
class OscillationSpec:
    """Liquid/vapor block pattern: n_interfaces macro-blocks, each with a
    liquid fraction theta, oscillating between r_vap and r_liq."""

    n_interfaces: int
    r_vap: float
    r_liq: float
    theta: float
    profile: str = "blocks"
    smoothing_width: float = 0.0

    def __post_init__(self):
        if self.n_interfaces < 1:
            raise ValidationError("oscillation needs n_interfaces >= 1")
        if not 0.0 < self.r_vap < self.r_liq:
            raise ValidationError("oscillation requires 0 < r_vap < r_liq")
        if not 0.0 < self.theta < 1.0:
            raise ValidationError("oscillation theta must lie in (0, 1)")
        if self.profile == "smoothed" and not self.smoothing_width > 0.0:
            raise ValidationError("smoothed profile needs a positive smoothing_width")

    @property
    def mean_density(self):
        return self.theta * self.r_liq + (1.0 - self.theta) * self.r_vap


def gen_oscillating_density(grid, spec, n_interfaces=None):
    """Sample the oscillating density at cell centers.

    The domain splits into equal macro-blocks, each starting with a liquid
    sub-block of fraction theta followed by vapor. The blocks profile is
    piecewise constant; the smoothed profile replaces each jump by a tanh
    ramp of the given width. The sample mean deviates from the nominal
    mixture mean only by block/grid misalignment, at most
    (r_liq - r_vap) * dx / L per interface pair.
    """
    n = spec.n_interfaces if n_interfaces is None else int(n_interfaces)
    if 2 * n > grid.n_cells:
        raise ValidationError(
            f"resolution insufficient: 2 * n_interfaces = {2 * n} exceeds n_cells = {grid.n_cells}"
        )
    x = grid.centers()
    p = grid.length / n
    if spec.profile == "blocks":
        local = np.mod(x, p) / p
        return np.where(local < spec.theta, spec.r_liq, spec.r_vap)
    w = spec.smoothing_width
    s = np.zeros_like(x)
    for j in range(n):
        a = j * p
        b = (j + spec.theta) * p
        s += 0.5 * (np.tanh((x - a) / w) - np.tanh((x - b) / w))
    return spec.r_vap + (spec.r_liq - spec.r_vap) * np.clip(s, 0.0, 1.0)


def limit_measure(theta, r_vap, r_liq):
    """Weak-* limit of the block pattern: (1-theta) delta_{r_vap} + theta delta_{r_liq}."""
    if not 0.0 < theta < 1.0:
        raise ValidationError("theta must lie in (0, 1)")
    if not 0.0 < r_vap < r_liq:
        raise ValidationError("need 0 < r_vap < r_liq")
    return AtomicMeasure(np.array([1.0 - theta, theta]), np.array([r_vap, r_liq]))


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Scalar observable g applied either to a density field or to a
    measure (as the per-cell average <nu, g>)."""

    name: str
    fn: object
    dfn: object = None


def xi_observable():
    return Observable("xi", lambda z: z, lambda z: np.ones_like(np.asarray(z, dtype=float)))


def peff_observable(law):
    return Observable(
        "peff",
        lambda z: pressure.evaluate(law, z, "Peff"),
        lambda z: pressure.evaluate(law, z, "dPeff"),
    )


def bounded_observable():
    """b(z) = z / (1 + z): smooth, bounded, strictly monotone on [0, inf)."""
    return Observable(
        "bounded",
        lambda z: z / (1.0 + z),
        lambda z: 1.0 / (1.0 + z) ** 2,
    )


def observable_by_name(name, law):
    if name == "xi":
        return xi_observable()
    if name == "peff":
        return peff_observable(law)
    if name == "bounded":
        return bounded_observable()
    raise ValidationError(f"unknown observable {name!r}")


def _state_observable_field(state, obs, law):
    """g(rho) for a fluid state, <nu, g> for an effective state."""
    if isinstance(state, EffectiveState):
        if obs.name == "xi":
            return state.rho
        if obs.name == "peff":
            return state.pbar
        return state.nu.field_moment(obs.fn)
    return obs.fn(state.rho)


# ---------------------------------------------------------------------------
# weak-* convergence probe


def weak_distance(grid, field_a, field_b, window_h):
    """L2 norm of the box-mollified difference of two centered fields."""
    a = grd._require_center(grid, field_a)
    b = grd._require_center(grid, field_b)
    diff = grd.mollify(grid, a - b, window_h)
    return float(np.sqrt(grd.integrate(grid, diff * diff)))


def weak_distance_series(grid, fields_a, fields_b, window_h):
    """Root-mean-square over snapshots of the spatial weak distance."""
    if len(fields_a) != len(fields_b) or not fields_a:
        raise ValidationError("snapshot series must be non-empty and matching")
    sq = [weak_distance(grid, a, b, window_h) ** 2 for a, b in zip(fields_a, fields_b)]
    return float(np.sqrt(np.mean(sq)))


def trajectory_weak_distance(grid, traj_a, traj_b, obs, law, window_h):
    _check_compatible(traj_a, traj_b)
    fields_a = [_state_observable_field(s, obs, law) for s in traj_a.states]
    fields_b = [_state_observable_field(s, obs, law) for s in traj_b.states]
    return weak_distance_series(grid, fields_a, fields_b, window_h)


def _check_compatible(traj_a, traj_b):
    if traj_a.grid != traj_b.grid:
        raise ValidationError("trajectories live on different grids")
    ta, tb = np.asarray(traj_a.times), np.asarray(traj_b.times)
    if ta.shape != tb.shape or np.max(np.abs(ta - tb)) > 1e-10 * (1.0 + ta[-1] if ta.size else 1.0):
        raise ValidationError("trajectories have mismatched snapshot times")


# ---------------------------------------------------------------------------
# effective viscous flux functional


def _trapezoid_weights(times):
    t = np.asarray(times, dtype=float)
    if t.size == 1:
        return np.array([1.0])
    w = np.empty_like(t)
    w[0] = 0.5 * (t[1] - t[0])
    w[-1] = 0.5 * (t[-1] - t[-2])
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    return w


def _time_quadrature_weights(times):
    """Composite Simpson weights on uniform snapshot grids with an odd point
    count, trapezoid otherwise.

    Simpson keeps the time-quadrature error far below the O(dx + dt) scheme
    defect that residual refinement studies measure.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 3 or t.size % 2 == 0:
        return _trapezoid_weights(t)
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1e-300):
        return _trapezoid_weights(t)
    w = np.full(t.size, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * dt[0] / 3.0


def evf_functional(grid, traj, law, params, obs, window_h):
    """Space-time average of the mollified product

        (pressure - (lambda + 2 mu) du/dx) * g

    with pressure = Peff(rho), g = g(rho) on a detailed trajectory and
    pressure = <nu, Peff>, g = <nu, g> on an effective one.

    The time average carries the interior taper sin^2(pi t / T): the flux
    identity is tested against functions compactly supported inside the
    space-time cylinder, so the fixed probe must vanish at t = 0 and t = T.
    Degenerate single-snapshot trajectories fall back to a flat weight.
    """
    k_visc = params.viscosity_total
    times = np.asarray(traj.times, dtype=float)
    weights = _trapezoid_weights(times)
    span = times[-1] - times[0]
    if span > 0.0:
        taper = np.sin(np.pi * (times - times[0]) / span) ** 2
        if np.sum(weights * taper) > 0.0:
            weights = weights * taper
    total_t = float(np.sum(weights))
    acc = 0.0
    for wt, state in zip(weights, traj.states):
        if wt == 0.0:
            continue
        if isinstance(state, EffectiveState):
            press = state.pbar
        else:
            press = pressure.evaluate(law, state.rho, "Peff")
        gfield = _state_observable_field(state, obs, law)
        divu = grd.div_face_to_center(grid, state.u)
        integrand = (press - k_visc * divu) * gfield
        acc += wt * grd.integrate(grid, grd.mollify(grid, integrand, window_h)) / grid.length
    return acc / total_t


def evf_gap(grid, traj_detailed, traj_effective, law, params, obs, window_h):
    """|G_detailed - G_effective| for the flux-observable product functional."""
    _check_compatible(traj_detailed, traj_effective)
    g_det = evf_functional(grid, traj_detailed, law, params, obs, window_h)
    g_eff = evf_functional(grid, traj_effective, law, params, obs, window_h)
    return abs(g_det - g_eff)


# ---------------------------------------------------------------------------
# space-time test functions


@dataclass(frozen=True)
class SpaceTimeTest:
    """Separable test function phi(t, x) = g(t) h(x) with analytic partials.

    The built-in tapers vanish at the final time, which every assembled
    identity here assumes for its final-time boundary term.
    """

    name: str
    value: object
    dt: object
    dx: object


def _bump(x0, w):
    def h(x):
        y = (np.asarray(x, dtype=float) - x0) / w
        out = np.zeros_like(y)
        inside = np.abs(y) < 1.0
        yi = y[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - yi * yi))
        return out

    def dh(x):
        y = (np.asarray(x, dtype=float) - x0) / w
        out = np.zeros_like(y)
        inside = np.abs(y) < 1.0
        yi = y[inside]
        core = np.exp(1.0 - 1.0 / (1.0 - yi * yi))
        out[inside] = core * (-2.0 * yi / (1.0 - yi * yi) ** 2) / w
        return out

    return h, dh


_TAPERS = {
    "cos2": (
        lambda t, T: np.cos(0.5 * np.pi * t / T) ** 2,
        lambda t, T: -(0.5 * np.pi / T) * np.sin(np.pi * t / T),
    ),
    "quad": (
        lambda t, T: (1.0 - t / T) ** 2,
        lambda t, T: -2.0 * (1.0 - t / T) / T,
    ),
    "lin": (
        lambda t, T: 1.0 - t / T,
        lambda t, T: -1.0 / T + 0.0 * t,
    ),
}


def make_spacetime_test(name, t_end, x0, width, taper="cos2"):
    h, dh = _bump(x0, width)
    g, dg = _TAPERS[taper]
    return SpaceTimeTest(
        name,
        value=lambda t, x: g(t, t_end) * h(x),
        dt=lambda t, x: dg(t, t_end) * h(x),
        dx=lambda t, x: g(t, t_end) * dh(x),
    )


def default_tests(t_end, length):
    """Three fixed bump-in-space, taper-in-time test functions."""
    return [
        make_spacetime_test("bump-center", t_end, 0.5 * length, 0.35 * length, "cos2"),
        make_spacetime_test("bump-left", t_end, 0.35 * length, 0.25 * length, "quad"),
        make_spacetime_test("bump-right", t_end, 0.62 * length, 0.3 * length, "lin"),
    ]


@dataclass(frozen=True)
class KineticTest:
    """Test function psi(t, x, xi) with analytic partials."""

    name: str
    value: object
    dt: object
    dx: object
    dxi: object


def kinetic_test_from(st, chi, dchi, name=None):
    """psi = phi(t, x) chi(xi) from a space-time test and a xi profile."""
    return KineticTest(
        name or f"{st.name}*chi",
        value=lambda t, x, xi: st.value(t, x) * chi(xi),
        dt=lambda t, x, xi: st.dt(t, x) * chi(xi),
        dx=lambda t, x, xi: st.dx(t, x) * chi(xi),
        dxi=lambda t, x, xi: st.value(t, x) * dchi(xi),
    )


def kinetic_identity_test(st):
    """psi = phi * xi, for which xi d_xi(psi) - psi vanishes identically."""
    one = lambda xi: np.ones_like(np.asarray(xi, dtype=float))
    return kinetic_test_from(st, lambda xi: np.asarray(xi, dtype=float), one, name=f"{st.name}*xi")


def kinetic_bump_test(st, xi0, width):
    h, dh = _bump(xi0, width)
    return kinetic_test_from(st, h, dh, name=f"{st.name}*bump")


# ---------------------------------------------------------------------------
# weak-form residuals

_EQUATIONS = ("continuity", "momentum", "parabolic", "renormalized", "kinetic", "cdf")


def weak_residual(grid, traj, which, test, law, params, b=None, xi_grid=None):
    """Absolute defect of the space-time integral identity ``which`` for a
    discrete trajectory, assembled against ``test`` with trapezoid-in-time
    and midpoint-in-space quadrature.

    ``which`` is one of continuity | momentum | parabolic | renormalized |
    kinetic | cdf. The measure-based forms (kinetic, cdf) require an
    effective trajectory; ``renormalized`` takes the truncation observable
    ``b``. An exact weak solution has defect 0; first-order discrete
    solutions shrink the defect under simultaneous (dx, dt) refinement.
    """
    if which not in _EQUATIONS:
        raise ValidationError(f"unknown equation {which!r}")
    is_effective = isinstance(traj, EffectiveTrajectory)
    if which in ("kinetic", "cdf") and not is_effective:
        raise ValidationError(f"{which} residual requires an effective trajectory")
    if len(traj.times) < 2:
        raise ValidationError("residual assembly needs at least two snapshots")
    x = grid.centers()
    dx = grid.dx
    times = np.asarray(traj.times)
    weights = _time_quadrature_weights(times)

    if which == "kinetic":
        return _kinetic_residual(grid, traj, test, law, params, weights)
    if which == "cdf":
        return _cdf_residual(grid, traj, test, law, params, weights, xi_grid)

    acc = 0.0
    for wt, t, state in zip(weights, times, traj.states):
        phi = test.value(t, x)
        phit = test.dt(t, x)
        phix = test.dx(t, x)
        rho = state.rho
        u_c = grd.center_average(grid, state.u)
        if which == "continuity":
            integrand = rho * phit + rho * u_c * phix
        elif which == "momentum":
            divu = grd.div_face_to_center(grid, state.u)
            peff = state.pbar if is_effective else pressure.evaluate(law, rho, "Peff")
            cx_c = grd.center_average(grid, grd.grad_center_to_face(grid, state.c))
            integrand = (
                rho * u_c * phit
                + rho * u_c * u_c * phix
                + peff * phix
                - params.viscosity_total * divu * phix
                + params.alpha * rho * cx_c * phi
            )
        elif which == "parabolic":
            cxf = grd.grad_center_to_face(grid, state.c)
            cx_c = grd.center_average(grid, cxf)
            integrand = (
                params.beta * state.c * phit
                - params.kappa * cx_c * phix
                - params.alpha * (state.c - rho) * phi
            )
        else:  # renormalized
            if b is None:
                raise ValidationError("renormalized residual needs the observable b")
            divu = grd.div_face_to_center(grid, state.u)
            brho = b.fn(rho)
            integrand = brho * phit + brho * u_c * phix - (b.dfn(rho) * rho - brho) * divu * phi
        acc += wt * float(np.sum(integrand) * dx)

    first, last = traj.states[0], traj.states[-1]
    t0, tT = times[0], times[-1]
    if which == "continuity":
        initial = float(np.sum(first.rho * test.value(t0, x)) * dx)
        final = float(np.sum(last.rho * test.value(tT, x)) * dx)
    elif which == "momentum":
        m0 = first.rho * grd.center_average(grid, first.u)
        mT = last.rho * grd.center_average(grid, last.u)
        initial = float(np.sum(m0 * test.value(t0, x)) * dx)
        final = float(np.sum(mT * test.value(tT, x)) * dx)
    elif which == "parabolic":
        initial = params.beta * float(np.sum(first.c * test.value(t0, x)) * dx)
        final = params.beta * float(np.sum(last.c * test.value(tT, x)) * dx)
    else:  # renormalized: identity holds for tests vanishing at the final time
        initial = float(np.sum(b.fn(first.rho) * test.value(t0, x)) * dx)
        final = 0.0
    return abs(acc + initial - final)


def _kinetic_residual(grid, traj, test, law, params, weights):
    x = grid.centers()
    dx = grid.dx
    acc = 0.0
    for wt, t, state in zip(weights, traj.times, traj.states):
        nu = state.nu
        u_c = grd.center_average(grid, state.u)
        divu = grd.div_face_to_center(grid, state.u)
        xa = x[nu.cell]
        xi = nu.xi
        q = q_drift_values(state.pbar[nu.cell], pressure.evaluate(law, xi, "Peff"), params)
        stretch = xi * test.dxi(t, xa, xi) - test.value(t, xa, xi)
        val = (
            test.dt(t, xa, xi)
            + test.dx(t, xa, xi) * u_c[nu.cell]
            + stretch * (q - divu[nu.cell])
        )
        acc += wt * float(np.sum(nu.w * val) * dx)
    first = traj.states[0]
    t0 = traj.times[0]
    nu0 = first.nu
    initial = float(np.sum(nu0.w * test.value(t0, x[nu0.cell], nu0.xi)) * dx)
    return abs(acc + initial)


def _cell_cdf_and_m(nu, law, params, pbar, xi_grid):
    """Per-cell CDF samples and Stieltjes partial sums on a fixed xi grid."""
    n_cells = nu.n_cells
    nk = xi_grid.size
    f = np.zeros((n_cells, nk))
    m = np.zeros((n_cells, nk))
    order = np.lexsort((nu.xi, nu.cell))
    w, xi, cell = nu.w[order], nu.xi[order], nu.cell[order]
    q = q_drift_values(pbar[cell], pressure.evaluate(law, xi, "Peff"), params)
    starts = np.searchsorted(cell, np.arange(n_cells), side="left")
    ends = np.searchsorted(cell, np.arange(n_cells), side="right")
    for i in range(n_cells):
        s, e = starts[i], ends[i]
        if s == e:
            continue
        cw = np.cumsum(w[s:e])
        cq = np.cumsum(w[s:e] * q[s:e])
        idx = np.searchsorted(xi[s:e], xi_grid, side="right")
        f[i] = np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)
        m[i] = np.where(idx > 0, cq[np.maximum(idx - 1, 0)], 0.0)
    return f, m


def _cdf_residual(grid, traj, test, law, params, weights, xi_grid):
    if xi_grid is None:
        xi_max = 1.5 * max(float(np.max(s.nu.xi)) for s in traj.states)
        xi_grid = np.linspace(0.0, xi_max, 401)
    xi_grid = np.asarray(xi_grid, dtype=float)
    dxi = np.diff(xi_grid)
    # midpoint quadrature in xi on the step function f
    xi_mid = 0.5 * (xi_grid[:-1] + xi_grid[1:])
    x = grid.centers()
    dx = grid.dx
    acc = 0.0
    for wt, t, state in zip(weights, traj.times, traj.states):
        u_c = grd.center_average(grid, state.u)
        divu = grd.div_face_to_center(grid, state.u)
        f, m = _cell_cdf_and_m(state.nu, law, params, state.pbar, xi_mid)
        tt = np.broadcast_to(t, (grid.n_cells, xi_mid.size))
        xx = np.broadcast_to(x[:, None], (grid.n_cells, xi_mid.size))
        zz = np.broadcast_to(xi_mid[None, :], (grid.n_cells, xi_mid.size))
        val = (
            f * test.dt(tt, xx, zz)
            + f * u_c[:, None] * test.dx(tt, xx, zz)
            - (zz * f * divu[:, None] - zz * m) * test.dxi(tt, xx, zz)
        )
        acc += wt * float(np.sum(val * dxi[None, :]) * dx)
    first = traj.states[0]
    t0 = traj.times[0]
    f0, _ = _cell_cdf_and_m(first.nu, law, params, first.pbar, xi_mid)
    tt = np.broadcast_to(t0, f0.shape)
    xx = np.broadcast_to(x[:, None], f0.shape)
    zz = np.broadcast_to(xi_mid[None, :], f0.shape)
    initial = float(np.sum(f0 * test.value(tt, xx, zz) * dxi[None, :]) * dx)
    return abs(acc + initial)
