import numpy as np
import pytest

from pnsklab import grid as grd
from pnsklab import hydro, pnsk, pressure
from pnsklab.errors import BlowUpError, CourantError, ValidationError

LAW = pressure.isentropic(1.0, 2.0, alpha=1.0)


def make_params(**kw):
    base = dict(mu=0.05, lambda_=0.05, kappa=1e-3, alpha=1.0, beta=1.0, dt_max=1e-3)
    base.update(kw)
    return hydro.Params(**base)


def rest_state(n, value=2.0):
    return grd.FluidState(np.full(n, value), np.zeros(n + 1), np.full(n, value))


def test_continuity_zero_velocity_keeps_density():
    g = grd.Grid1D(32, 1.0)
    rng = np.random.RandomState(0)
    rho = 1.0 + rng.rand(32)
    st = grd.FluidState(rho, np.zeros(33), np.ones(32))
    assert np.array_equal(pnsk.step_continuity(g, st, make_params(), 1e-3), rho)


def test_continuity_conserves_mass():
    g = grd.Grid1D(64, 1.0)
    rng = np.random.RandomState(1)
    u = 0.4 * rng.randn(65)
    u[0] = u[-1] = 0.0
    st = grd.FluidState(np.ones(64), u, np.ones(64))
    dt = 0.5 * g.dx / np.max(np.abs(u))
    rho_new = pnsk.step_continuity(g, st, make_params(), dt)
    assert np.sum(rho_new) * g.dx == pytest.approx(1.0, rel=1e-14)


def test_continuity_unit_courant_shifts_pulse():
    g = grd.Grid1D(32, 1.0)
    rho = np.zeros(32)
    rho[10] = 1.0
    dt = 1e-3
    u = np.full(33, g.dx / dt)
    u[0] = u[-1] = 0.0
    st = grd.FluidState(rho, u, np.ones(32))
    rho_new = pnsk.step_continuity(g, st, make_params(), dt)
    assert rho_new[11] == pytest.approx(1.0, rel=1e-14)
    assert rho_new[10] == pytest.approx(0.0, abs=1e-15)


def test_continuity_rejects_courant_violation():
    g = grd.Grid1D(16, 1.0)
    u = np.zeros(17)
    u[8] = 10.0
    st = grd.FluidState(np.ones(16), u, np.ones(16))
    with pytest.raises(CourantError):
        pnsk.step_continuity(g, st, make_params(), 2.0 * g.dx / 10.0)


def test_step_pnsk_rest_equilibrium_fixed_point():
    g = grd.Grid1D(32, 1.0)
    st = rest_state(32)
    out = pnsk.step_pnsk(g, st, LAW, make_params(), 1e-3)
    assert np.allclose(out.rho, st.rho, atol=1e-15)
    assert np.allclose(out.u, 0.0, atol=1e-14)
    assert np.allclose(out.c, st.c, atol=1e-13)


def test_step_pnsk_first_order_in_dt():
    g = grd.Grid1D(64, 1.0)
    x = g.centers()
    rho0 = 2.0 + 0.2 * np.sin(2 * np.pi * x)

    def advance(dt, n_steps):
        st = grd.FluidState(rho0.copy(), np.zeros(65), rho0.copy())
        params = make_params(dt_max=dt)
        for _ in range(n_steps):
            st = pnsk.step_pnsk(g, st, LAW, params, dt)
        return st

    base_dt = 4e-4
    s1 = advance(base_dt, 50)
    s2 = advance(base_dt / 2, 100)
    s3 = advance(base_dt / 4, 200)
    e1 = np.linalg.norm(s1.u - s2.u)
    e2 = np.linalg.norm(s2.u - s3.u)
    assert 1.5 <= e1 / e2 <= 2.5


def test_step_pnsk_keeps_density_nonnegative():
    g = grd.Grid1D(128, 1.0)
    rho = np.where(np.arange(128) % 8 < 3, 2.0, 1e-3)
    st = grd.FluidState(rho.astype(float), np.zeros(129), np.full(128, 0.6))
    params = make_params(cfl=0.4)
    for _ in range(50):
        dt = pnsk.dt_cfl(g, st.rho, st.u, LAW, params)
        st = pnsk.step_pnsk(g, st, LAW, params, dt)
        assert np.min(st.rho) >= 0.0


def test_run_pnsk_zero_horizon_returns_init():
    g = grd.Grid1D(16, 1.0)
    st = rest_state(16)
    traj = pnsk.run_pnsk(g, st, LAW, make_params(), [])
    assert len(traj.states) == 1
    assert traj.n_steps == 0
    assert np.array_equal(traj.states[0].rho, st.rho)


def test_run_pnsk_rest_trajectory_constant():
    g = grd.Grid1D(16, 1.0)
    st = rest_state(16)
    traj = pnsk.run_pnsk(g, st, LAW, make_params(), [0.01, 0.03])
    for s in traj.states:
        assert np.allclose(s.rho, st.rho, atol=1e-13)
        assert np.allclose(s.u, 0.0, atol=1e-13)


def test_run_pnsk_snapshots_hit_output_times():
    g = grd.Grid1D(32, 1.0)
    x = g.centers()
    st = grd.FluidState(2.0 + 0.1 * np.sin(2 * np.pi * x), np.zeros(33), np.full(32, 2.0))
    times = [0.0137, 0.0201, 0.05]
    traj = pnsk.run_pnsk(g, st, LAW, make_params(), times)
    assert traj.times[0] == 0.0  # initial snapshot always present
    assert traj.times[1:] == times


def test_run_pnsk_gamma14_monitor_exponents():
    g = grd.Grid1D(32, 1.0)
    law = pressure.isentropic(1.0, 1.4, alpha=1.0)
    st = rest_state(32, 1.0)
    traj = pnsk.run_pnsk(g, st, law, make_params(), [0.01])
    assert traj.monitors["gamma_tilde"] == 2.0
    assert traj.monitors["theta"] == pytest.approx(1.0 / 3.0)
    assert traj.monitors["delta"] == pytest.approx(7.0 / 6.0)


def test_run_pnsk_mass_conserved_every_step():
    g = grd.Grid1D(128, 1.0)
    x = g.centers()
    st = grd.FluidState(2.0 + 0.4 * np.sin(4 * np.pi * x), np.zeros(129), np.full(128, 2.0))
    traj = pnsk.run_pnsk(g, st, LAW, make_params(), [0.05])
    m = np.asarray(traj.mass_history)
    assert np.max(np.abs(m - m[0])) <= 1e-12 * m[0]


def test_run_pnsk_blowup_detection(monkeypatch):
    g = grd.Grid1D(16, 1.0)
    st = rest_state(16)

    def bad_step(grid, state, law, params, dt):
        out = state.copy()
        out.rho = out.rho.copy()
        out.rho[3] = np.nan
        out.t = state.t + dt
        return out

    monkeypatch.setattr(pnsk, "step_pnsk", bad_step)
    with pytest.raises(BlowUpError) as err:
        pnsk.run_pnsk(g, st, LAW, make_params(), [0.01])
    assert err.value.snapshot is not None
    assert np.all(np.isfinite(err.value.snapshot.rho))


def test_c_mean_reference_values():
    params = make_params(alpha=2.0, beta=1.0)
    assert pnsk.c_mean_reference(1.0, 1.0, params, 0.7) == 1.0
    assert pnsk.c_mean_reference(0.0, 1.0, params, np.log(2.0) / 2.0) == pytest.approx(0.5, rel=1e-14)
    assert pnsk.c_mean_reference(0.3, 1.0, params, 1e3) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        pnsk.c_mean_reference(0.0, 1.0, params, -1.0)


def test_simulated_c_mean_tracks_reference():
    g = grd.Grid1D(64, 1.0)
    x = g.centers()
    rho0 = 2.0 + 0.1 * np.sin(2 * np.pi * x)
    st = grd.FluidState(rho0, np.zeros(65), np.full(64, 1.5), 0.0)
    params = make_params(alpha=2.0, beta=1.0, dt_max=2e-4)
    t_end = 0.1
    traj = pnsk.run_pnsk(g, st, LAW, params, [t_end])
    m_rho = traj.mass_history[0] / g.length
    m_c0 = traj.c_mean_history[0]
    dt = max(traj.dt_history)
    for t, c_mean in zip(traj.step_times, traj.c_mean_history):
        ref = pnsk.c_mean_reference(m_c0, m_rho, params, t)
        assert abs(c_mean - ref) <= 5.0 * dt * (params.alpha / params.beta) * t_end * abs(ref) + 1e-14
