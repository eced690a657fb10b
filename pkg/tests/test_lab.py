import numpy as np
import pytest

from pnsklab import effective as eff
from pnsklab import grid as grd
from pnsklab import hydro, lab, measure, pnsk, pressure
from pnsklab.errors import ValidationError

LAW = pressure.isentropic(1.0, 2.0, alpha=1.0)


def make_params(**kw):
    base = dict(mu=0.05, lambda_=0.05, kappa=1e-3, alpha=1.0, beta=1.0, dt_max=1e-3)
    base.update(kw)
    return hydro.Params(**base)


# -- oscillating data and its limit ---------------------------------------


def test_blocks_single_interface_mean():
    g = grd.Grid1D(64, 1.0)
    spec = lab.OscillationSpec(1, 0.2, 2.0, 0.5)
    rho = lab.gen_oscillating_density(g, spec)
    assert np.mean(rho) == pytest.approx(1.1, rel=1e-14)
    assert set(np.unique(rho)) == {0.2, 2.0}


def test_blocks_mean_independent_of_n():
    g = grd.Grid1D(64, 1.0)
    spec = lab.OscillationSpec(4, 0.2, 2.0, 0.5)
    rho = lab.gen_oscillating_density(g, spec)
    assert np.mean(rho) == pytest.approx(1.1, rel=1e-14)
    assert grd.integrate(g, rho) == pytest.approx(1.1 * g.length, rel=1e-14)


def test_blocks_resolution_precondition():
    g = grd.Grid1D(16, 1.0)
    spec = lab.OscillationSpec(9, 0.2, 2.0, 0.5)
    with pytest.raises(ValidationError, match="resolution"):
        lab.gen_oscillating_density(g, spec)


def test_smoothed_profile_stays_in_range():
    g = grd.Grid1D(256, 1.0)
    spec = lab.OscillationSpec(4, 0.2, 2.0, 0.5, profile="smoothed", smoothing_width=0.01)
    rho = lab.gen_oscillating_density(g, spec)
    assert np.all(rho >= 0.2 - 1e-12) and np.all(rho <= 2.0 + 1e-12)
    assert np.mean(rho) == pytest.approx(1.1, rel=2e-2)


def test_oscillation_spec_validation():
    with pytest.raises(ValidationError):
        lab.OscillationSpec(0, 0.2, 2.0, 0.5)
    with pytest.raises(ValidationError):
        lab.OscillationSpec(1, 2.0, 0.2, 0.5)
    with pytest.raises(ValidationError):
        lab.OscillationSpec(1, 0.2, 2.0, 1.0)
    with pytest.raises(ValidationError):
        lab.OscillationSpec(1, 0.2, 2.0, 0.5, profile="smoothed")


def test_limit_measure_weights_and_mean():
    m = lab.limit_measure(0.5, 0.2, 2.0)
    assert np.allclose(np.sort(m.w), [0.5, 0.5])
    assert measure.first_moment(m) == pytest.approx(1.1, rel=1e-15)
    m2 = lab.limit_measure(0.999999, 0.2, 2.0)
    assert measure.first_moment(m2) == pytest.approx(2.0, abs=1e-5)
    with pytest.raises(ValidationError):
        lab.limit_measure(1.0, 0.2, 2.0)


def test_limit_measure_matches_generator_mean():
    g = grd.Grid1D(64, 1.0)
    spec = lab.OscillationSpec(2, 0.2, 2.0, 0.25)
    rho = lab.gen_oscillating_density(g, spec)
    m = lab.limit_measure(spec.theta, spec.r_vap, spec.r_liq)
    assert np.mean(rho) == pytest.approx(measure.first_moment(m), rel=1e-13)


# -- weak-* probe ----------------------------------------------------------


def test_weak_distance_identical_fields():
    g = grd.Grid1D(64, 1.0)
    f = np.random.RandomState(0).rand(64)
    assert lab.weak_distance(g, f, f, 8 * g.dx) == 0.0


def test_weak_distance_damps_oscillation():
    g = grd.Grid1D(128, 1.0)
    amp = 1.7
    f = amp * np.where(np.arange(128) % 2 == 0, 1.0, -1.0)
    d = lab.weak_distance(g, f, np.zeros(128), 8 * g.dx)
    assert d <= amp / 4.0


def test_weak_distance_norm_axioms():
    g = grd.Grid1D(64, 1.0)
    rng = np.random.RandomState(1)
    a, b, c = rng.rand(64), rng.rand(64), rng.rand(64)
    h = 6 * g.dx
    dab = lab.weak_distance(g, a, b, h)
    assert dab == pytest.approx(lab.weak_distance(g, b, a, h), rel=1e-14)
    assert dab <= lab.weak_distance(g, a, c, h) + lab.weak_distance(g, c, b, h) + 1e-14
    # scaling homogeneity
    s = 3.7
    assert lab.weak_distance(g, s * a, s * b, h) == pytest.approx(abs(s) * dab, rel=1e-12)


def test_weak_distance_series_rms():
    g = grd.Grid1D(64, 1.0)
    ones = np.ones(64)
    d = lab.weak_distance_series(g, [ones, ones], [0.0 * ones, 2.0 * ones], 4 * g.dx)
    # distances 1 and 1 -> rms 1
    assert d == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValidationError):
        lab.weak_distance_series(g, [ones], [ones, ones], 4 * g.dx)


# -- effective viscous flux functional --------------------------------------


def test_evf_gap_identical_trajectories_is_exactly_zero():
    g = grd.Grid1D(32, 1.0)
    x = g.centers()
    st = grd.FluidState(2.0 + 0.1 * np.sin(2 * np.pi * x), np.zeros(33), np.full(32, 2.0))
    traj = pnsk.run_pnsk(g, st, LAW, make_params(), [0.01, 0.02])
    gap = lab.evf_gap(g, traj, traj, LAW, make_params(), lab.bounded_observable(), 4 * g.dx)
    assert gap == 0.0


def test_evf_gap_uniform_runs_near_zero():
    # no oscillation: a detailed run from the mixture mean against the
    # single-atom effective run built on the same density
    g = grd.Grid1D(32, 1.0)
    params = make_params()
    rho0 = np.full(32, 1.4)
    st = grd.FluidState(rho0, np.zeros(33), rho0.copy(), 0.0)
    ptraj = pnsk.run_pnsk(g, st, LAW, params, [0.01, 0.02])
    es = eff.EffectiveState.from_density(g, rho0, np.zeros(33), rho0.copy(), LAW)
    etraj = eff.run_effective(g, es, LAW, params, [0.01, 0.02])
    gap = lab.evf_gap(g, ptraj, etraj, LAW, params, lab.bounded_observable(), 4 * g.dx)
    assert gap < 1e-12


def test_evf_gap_rejects_mismatched_sampling():
    g = grd.Grid1D(32, 1.0)
    st = grd.FluidState(np.full(32, 2.0), np.zeros(33), np.full(32, 2.0))
    t1 = pnsk.run_pnsk(g, st, LAW, make_params(), [0.01])
    t2 = pnsk.run_pnsk(g, st, LAW, make_params(), [0.02])
    with pytest.raises(ValidationError):
        lab.evf_gap(g, t1, t2, LAW, make_params(), lab.bounded_observable(), 4 * g.dx)


# -- weak-form residuals -----------------------------------------------------


def rest_pnsk_traj(n=64, t_end=0.04, n_out=17):
    g = grd.Grid1D(n, 1.0)
    st = grd.FluidState(np.full(n, 2.0), np.zeros(n + 1), np.full(n, 2.0))
    times = list(np.linspace(0.0, t_end, n_out))
    return g, pnsk.run_pnsk(g, st, LAW, make_params(), times)


def rest_effective_traj(n=64, t_end=0.04, n_out=17):
    g = grd.Grid1D(n, 1.0)
    m = measure.AtomicMeasure(np.array([1.0]), np.array([2.0]))
    es = eff.EffectiveState.from_uniform_measure(g, m, np.zeros(n + 1), np.full(n, 2.0), LAW)
    times = list(np.linspace(0.0, t_end, n_out))
    return g, eff.run_effective(g, es, LAW, make_params(), times)


def test_weak_residual_rest_equilibrium_vanishes():
    # the defect of an exact steady solution is pure quadrature error of the
    # taper/bump test functions; at 64 cells and 17 snapshots that is < 5e-5
    g, traj = rest_pnsk_traj()
    b = lab.bounded_observable()
    for st in lab.default_tests(0.04, 1.0):
        for eq in ("continuity", "momentum", "parabolic", "renormalized"):
            r = lab.weak_residual(g, traj, eq, st, LAW, make_params(), b=b)
            assert r <= 5e-5, (eq, st.name, r)
    ge, etraj = rest_effective_traj()
    for st in lab.default_tests(0.04, 1.0):
        kt = lab.kinetic_bump_test(st, 2.0, 1.5)
        assert lab.weak_residual(ge, etraj, "kinetic", kt, LAW, make_params()) <= 1e-5
        assert (
            lab.weak_residual(
                ge, etraj, "cdf", kt, LAW, make_params(), xi_grid=np.linspace(0.0, 4.0, 801)
            )
            <= 1e-5
        )


def test_weak_residual_rest_exact_for_linear_taper():
    # the linear taper integrates exactly under the trapezoid/Simpson rule,
    # so a rest trajectory gives a rounding-level defect
    g, traj = rest_pnsk_traj()
    st = lab.make_spacetime_test("lin-bump", 0.04, 0.5, 0.3, taper="lin")
    r = lab.weak_residual(g, traj, "continuity", st, LAW, make_params())
    assert r <= 1e-12


def test_weak_residual_rejects_bad_combinations():
    g, traj = rest_pnsk_traj()
    st = lab.default_tests(0.04, 1.0)[0]
    with pytest.raises(ValidationError):
        lab.weak_residual(g, traj, "kinetic", st, LAW, make_params())
    with pytest.raises(ValidationError):
        lab.weak_residual(g, traj, "cdf", st, LAW, make_params())
    with pytest.raises(ValidationError):
        lab.weak_residual(g, traj, "vorticity", st, LAW, make_params())
    with pytest.raises(ValidationError):
        lab.weak_residual(g, traj, "renormalized", st, LAW, make_params(), b=None)


def test_kinetic_identity_equals_continuity_residual():
    g = grd.Grid1D(48, 1.0)
    x = g.centers()
    rho0 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
    params = make_params(max_atoms=12)
    es = eff.EffectiveState.from_density(g, rho0, np.zeros(49), rho0.copy(), LAW)
    traj = eff.run_effective(g, es, LAW, params, list(np.linspace(0.0, 0.03, 7)))
    for st in lab.default_tests(0.03, 1.0):
        kt = lab.kinetic_identity_test(st)
        rk = lab.weak_residual(g, traj, "kinetic", kt, LAW, params)
        rc = lab.weak_residual(g, traj, "continuity", st, LAW, params)
        assert abs(rk - rc) <= 1e-12 * max(1.0, rc)


def test_renormalized_residual_quadratic_truncation_refines():
    # b(z) = z^2/2 gives b'(z) z - b(z) = z^2/2; the renormalized residual
    # shrinks under simultaneous (dx, dt) refinement
    bq = lab.Observable("half-square", lambda z: 0.5 * z * z, lambda z: z)

    def run(n, dtm):
        g = grd.Grid1D(n, 1.0)
        x = g.centers()
        st = grd.FluidState(2.0 + 0.3 * np.sin(2 * np.pi * x), np.zeros(n + 1), np.full(n, 1.8))
        params = make_params(dt_max=dtm, cfl=0.95)
        times = list(np.linspace(0.0, 0.05, 21))
        return g, params, pnsk.run_pnsk(g, st, LAW, params, times)

    st_fn = lab.default_tests(0.05, 1.0)[0]
    g1, p1, t1 = run(64, 8e-4)
    g2, p2, t2 = run(128, 4e-4)
    r1 = lab.weak_residual(g1, t1, "renormalized", st_fn, LAW, p1, b=bq)
    r2 = lab.weak_residual(g2, t2, "renormalized", st_fn, LAW, p2, b=bq)
    assert r1 / r2 >= 1.5


def test_observable_registry():
    assert lab.observable_by_name("xi", LAW).fn(3.0) == 3.0
    assert lab.observable_by_name("peff", LAW).fn(1.0) == pytest.approx(1.5)
    b = lab.observable_by_name("bounded", LAW)
    assert b.fn(1.0) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        lab.observable_by_name("entropy", LAW)
