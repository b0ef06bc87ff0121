import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from spinphonon.annealing import (
    AnnealSchedule,
    AnnealState,
    Orientation,
    adiabaticity_check,
    anneal_sweep,
    bloch_rhs,
    fidelity,
    initial_state,
    integrate_anneal,
    schedule_values,
)
from spinphonon.classical import exact_ground_state
from spinphonon.couplings import exact_couplings
from spinphonon.errors import ConfigError, NumericalError
from spinphonon.lattice import ChainConfig, chain_modes

FIG9 = dict(omega_x0=5.0, omega_z0=0.5)


def chain(t_C, N=20, **kw):
    cfg = ChainConfig(N, t_C, dk_d0=2 * np.pi / 3, **kw)
    modes = chain_modes(cfg)
    return cfg, modes, exact_couplings(modes, cfg).J


def test_schedule_endpoints():
    s = AnnealSchedule(tau_ev=3.0, omega_x0=5.0, omega_z0=0.5)
    assert schedule_values(0.0, s) == (5.0, 0.5, 0.0)
    ox, oz, w = schedule_values(3.0, s)
    assert ox == pytest.approx(5.0 / np.e)
    assert oz == pytest.approx(0.5 * np.exp(-10))
    assert w == pytest.approx(1 - 1 / np.e)
    ox, oz, w = schedule_values(1e4, s)
    assert (ox, oz, w) == pytest.approx((0.0, 0.0, 1.0), abs=1e-300)


def test_schedule_defaults_and_validation():
    s = AnnealSchedule(tau_ev=4.0, omega_x0=2.0)
    assert s.omega_z0 == pytest.approx(0.2)
    assert s.tau_ev_prime == pytest.approx(0.4)
    assert s.t_final == pytest.approx(40.0)
    with pytest.raises(ConfigError):
        AnnealSchedule(tau_ev=1.0, tau_ev_prime=2.0)
    with pytest.raises(ConfigError):
        AnnealSchedule(tau_ev=0.0)
    with pytest.raises(ValueError):
        schedule_values(-1.0, s)


def test_ising_fixed_point():
    J = np.array([[0.0, 0.3], [0.3, 0.0]])
    s = AnnealSchedule(tau_ev=1.0, omega_x0=0.0, omega_z0=0.0)
    st_ = AnnealState.at(2.0, np.array([[0, 0, 1.0], [0, 0, -1.0]]), s)
    np.testing.assert_array_equal(bloch_rhs(st_, s, J), 0.0)


def test_free_precession_about_x():
    s = AnnealSchedule(tau_ev=1e12, omega_x0=2.0, omega_z0=0.0, tau_ev_prime=1.0)
    b = np.array([[0.0, 0.6, 0.8]])
    d = bloch_rhs(AnnealState.at(0.0, b, s), s, np.zeros((1, 1)))
    np.testing.assert_allclose(d, [[0.0, -2.0 * 0.8, 2.0 * 0.6]])


@settings(max_examples=50, deadline=None)
@given(
    arrays(float, (4, 3), elements=st.floats(-1, 1)),
    arrays(float, (4, 4), elements=st.floats(-1, 1)),
    st.floats(0, 20),
)
def test_rhs_preserves_length(b, A, t):
    norms = np.linalg.norm(b, axis=1, keepdims=True)
    b = np.where(norms > 1e-3, b / np.maximum(norms, 1e-3), [[0, 0, 1.0]])
    s = AnnealSchedule(tau_ev=3.0, **FIG9)
    d = bloch_rhs(AnnealState.at(t, b, s), s, A + A.T)
    assert np.abs(np.sum(b * d, axis=1)).max() < 1e-12


def test_initial_orientation():
    s = AnnealSchedule(tau_ev=1.0, omega_x0=3.0, omega_z0=4.0)
    np.testing.assert_allclose(initial_state(2, s).bloch, [[0.6, 0, 0.8]] * 2)
    np.testing.assert_allclose(initial_state(2, s, Orientation.ANTI_ALIGNED).bloch, [[-0.6, 0, -0.8]] * 2)


def test_zero_longitudinal_field_is_stationary():
    _, _, J = chain(1.0, N=8)
    s = AnnealSchedule(tau_ev=20.0, omega_x0=5.0, omega_z0=0.0)
    traj = integrate_anneal(None, s, J, orientation=Orientation.ANTI_ALIGNED, samples=50)
    np.testing.assert_array_equal(traj.bloch, np.broadcast_to([-1.0, 0.0, 0.0], traj.bloch.shape))
    assert fidelity(traj.final, np.ones(8)) == 0.0


def test_against_reference_integrator():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(4, 4)) * 0.3
    J = A + A.T
    s = AnnealSchedule(tau_ev=3.0, **FIG9)
    traj = integrate_anneal(None, s, J, samples=30)
    b0 = initial_state(4, s).bloch

    def f(t, y):
        return bloch_rhs(AnnealState.at(t, y.reshape(4, 3), s), s, J).ravel()

    ref = solve_ivp(f, (0, s.t_final), b0.ravel(), method="DOP853", rtol=1e-12, atol=1e-14, t_eval=traj.times)
    np.testing.assert_allclose(traj.bloch.reshape(traj.times.size, -1), ref.y.T, atol=1e-6)


def test_longitudinal_sign_covariance():
    _, _, J = chain(0.3, N=8)
    a = integrate_anneal(None, AnnealSchedule(tau_ev=10.0, omega_x0=5.0, omega_z0=0.5), J, samples=20)
    b = integrate_anneal(None, AnnealSchedule(tau_ev=10.0, omega_x0=5.0, omega_z0=-0.5), J, samples=20)
    np.testing.assert_allclose(b.bloch * [1, -1, -1], a.bloch, atol=1e-6)


def test_tolerance_halving_converged():
    cfg, _, J = chain(0.1)
    gs = exact_ground_state(J, cfg.dk_d0).ground
    s = AnnealSchedule(tau_ev=100.0, **FIG9)
    f1 = fidelity(integrate_anneal(cfg, s, J, samples=10).final, gs)
    f2 = fidelity(integrate_anneal(cfg, s, J, samples=10, rtol=5e-9, atol=5e-13).final, gs)
    assert abs(f1 - f2) < 1e-6


def test_short_range_reaches_ferromagnet():
    cfg, modes, J = chain(0.1)
    gs = exact_ground_state(J, cfg.dk_d0).ground
    traj = integrate_anneal(cfg, AnnealSchedule(tau_ev=1000.0, **FIG9), J)
    assert fidelity(traj.final, gs) > 0.99
    assert traj.norm_drift() < 1e-6
    assert traj.fidelity_trace(gs)[-1] == pytest.approx(fidelity(traj.final, gs))
    assert adiabaticity_check(traj, modes).passed


def test_fast_schedule_flagged():
    cfg, modes, J = chain(0.1, N=6)
    traj = integrate_anneal(cfg, AnnealSchedule(tau_ev=1.0, **FIG9), J, samples=200)
    assert adiabaticity_check(traj, modes).violated


def test_static_trajectory_passes():
    _, modes, J = chain(1.0, N=6)
    s = AnnealSchedule(tau_ev=1e4, omega_x0=5.0, omega_z0=0.0)
    traj = integrate_anneal(None, s, J, orientation="anti_aligned", samples=20)
    rep = adiabaticity_check(traj, modes)
    assert rep.max_rate_x == rep.max_rate_z == 0.0
    assert rep.passed


def test_fidelity_examples():
    s = np.array([1.0, -1.0, 1.0, -1.0])
    assert fidelity(s, s) == 1.0
    assert fidelity(np.zeros(4), s) == 0.0
    assert fidelity(np.array([1.0, -1.0, -1.0, 1.0]), s) == 0.0
    assert fidelity(-s, s) == 1.0
    with pytest.raises(ValueError):
        fidelity(np.ones(3), s)


def test_size_mismatch_rejected():
    with pytest.raises(ConfigError):
        integrate_anneal(ChainConfig(4, 1.0), AnnealSchedule(tau_ev=1.0), np.zeros((6, 6)))


def test_step_budget_error():
    _, _, J = chain(1.0, N=4)
    with pytest.raises(NumericalError, match="exceeded"):
        integrate_anneal(None, AnnealSchedule(tau_ev=50.0, **FIG9), J, max_steps=10)


def test_sweep_grid_shape():
    base = ChainConfig(6, 0.1, dk_d0=2 * np.pi / 3)
    rows = anneal_sweep(base, [0.1, 1.0], [1.0, 10.0], jobs=1, samples=10)
    assert [(r.t_C, r.tau_ev) for r in rows] == [(0.1, 1.0), (0.1, 10.0), (1.0, 1.0), (1.0, 10.0)]
    assert all(0 <= r.fidelity <= 1 and r.norm_drift < 1e-6 for r in rows)
