import numpy as np
import pytest
from scipy import constants

from spinphonon.errors import ConfigError
from spinphonon.expparams import (
    COULOMB,
    TWO_PI,
    PhysicalSetup,
    angle_for_dk,
    axial_mode_clearance,
    axial_modes,
    coulomb_coupling,
    dk_d0_of,
    equilibrium_positions,
    from_dimensionless,
    ion_mass,
    lamb_dicke,
    omega_z_for_spacing,
    radial_modes,
    report,
    scaled_positions,
    to_chain_config,
    to_dimensionless,
)

BE9 = ion_mass("Be9")


def test_species_mass():
    assert BE9 == pytest.approx(9.0121831 * constants.atomic_mass - constants.m_e, rel=1e-15)
    assert ion_mass(1e-26) == 1e-26
    with pytest.raises(ConfigError, match="unknown species"):
        ion_mass("Xx7")


def test_coulomb_coupling_closed_form():
    s = PhysicalSetup()
    expected = constants.e**2 / (4 * np.pi * constants.epsilon_0 * BE9 * s.omega_x * s.d0**3)
    assert coulomb_coupling(s).angular == pytest.approx(expected, rel=1e-14)


def test_coulomb_coupling_scaling():
    s = PhysicalSetup()
    t = coulomb_coupling(s).hz
    assert coulomb_coupling(s.replace(d0=2 * s.d0)).hz == pytest.approx(t / 8, rel=1e-14)
    assert coulomb_coupling(s.replace(omega_x=2 * s.omega_x)).hz == pytest.approx(t / 2, rel=1e-14)
    assert coulomb_coupling(s.replace(charge=2)).hz == pytest.approx(4 * t, rel=1e-14)


def test_lamb_dicke_values():
    eta_x, eta_z = lamb_dicke(PhysicalSetup())
    assert eta_x == pytest.approx(0.21, rel=0.05)
    assert eta_z == pytest.approx(0.011, rel=0.1)
    assert lamb_dicke(PhysicalSetup(theta=0.0))[1] == 0.0


def test_lamb_dicke_warning():
    with pytest.warns(UserWarning, match="Lamb-Dicke"):
        lamb_dicke(PhysicalSetup(omega_x=TWO_PI * 2e5, omega_z=TWO_PI * 2e4))


def test_beam_angle():
    s = PhysicalSetup()
    _, deg = angle_for_dk(s, 2 * np.pi / 3)
    assert deg == pytest.approx(0.6, abs=0.05)
    assert angle_for_dk(s, 0.0) == (0.0, 0.0)
    assert angle_for_dk(s, np.pi)[1] == pytest.approx(1.5 * deg, rel=1e-4)
    rad, _ = angle_for_dk(s, 1.3)
    assert dk_d0_of(s.replace(theta=rad)) == pytest.approx(1.3, rel=1e-14)


def test_unreachable_phase_step():
    with pytest.raises(ConfigError, match="not reachable"):
        angle_for_dk(PhysicalSetup(d0=1e-7), 2 * np.pi / 3)


def test_trap_anisotropy_warning():
    with pytest.warns(UserWarning, match="linear chain"):
        PhysicalSetup(omega_x=TWO_PI * 1e6, omega_z=TWO_PI * 3e5)


def test_two_ion_equilibrium():
    wz = TWO_PI * 1e6
    eq = equilibrium_positions(2, wz)
    expected = (2 * COULOMB / (BE9 * wz**2)) ** (1 / 3)
    assert eq.positions[1] - eq.positions[0] == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(axial_modes(2, wz), [wz, np.sqrt(3) * wz], rtol=1e-12)
    np.testing.assert_allclose(radial_modes(2, 5 * wz, wz), [np.sqrt(24) * wz, 5 * wz], rtol=1e-12)


@pytest.mark.parametrize("N", [3, 10, 20, 50])
def test_positions_symmetric_and_balanced(N):
    u = scaled_positions(N)
    np.testing.assert_allclose(u, -u[::-1], atol=1e-14)
    assert np.all(np.diff(u) > 0)
    eq = equilibrium_positions(N, TWO_PI * 1e5)
    assert eq.residual < 1e-10
    assert eq.central_spacing <= eq.mean_spacing


def test_three_ion_closed_form():
    # outer ions at +-(5/4)^(1/3)
    np.testing.assert_allclose(scaled_positions(3), [-(1.25 ** (1 / 3)), 0, 1.25 ** (1 / 3)], atol=1e-12)


def test_axial_frequency_for_spacing():
    wz = omega_z_for_spacing(20, 10e-6)
    assert wz / TWO_PI == pytest.approx(192e3, rel=0.02)
    assert omega_z_for_spacing(50, 10e-6) / TWO_PI == pytest.approx(94e3, rel=0.02)
    eq = equilibrium_positions(20, wz)
    assert eq.mean_spacing == pytest.approx(10e-6, rel=1e-12)
    wc = omega_z_for_spacing(20, 10e-6, spacing="central")
    assert equilibrium_positions(20, wc).central_spacing == pytest.approx(10e-6, rel=1e-12)
    with pytest.raises(ConfigError):
        omega_z_for_spacing(20, 10e-6, spacing="edge")


def test_highest_axial_mode():
    s20 = PhysicalSetup()
    assert axial_mode_clearance(s20).omega_z_max / TWO_PI == pytest.approx(2.29e6, rel=0.03)
    s50 = PhysicalSetup(N=50, omega_z=TWO_PI * 94e3)
    rep = axial_mode_clearance(s50)
    assert rep.omega_z_max / TWO_PI == pytest.approx(2.5e6, rel=0.03)
    assert rep.clear


def test_dimensionless_round_trip():
    s = PhysicalSetup(theta=angle_for_dk(PhysicalSetup(), 2 * np.pi / 3)[0])
    delta = TWO_PI * 50e3
    dims = to_dimensionless(s, delta)
    back = from_dimensionless(dims, s.replace(omega_x=TWO_PI * 3e6, g=1.0, theta=0.0))
    assert back.omega_x == pytest.approx(s.omega_x, rel=1e-12)
    assert back.g == pytest.approx(s.g, rel=1e-12)
    assert back.theta == pytest.approx(s.theta, rel=1e-12)
    cfg = to_chain_config(s, delta)
    assert (cfg.N, cfg.delta_target) == (20, 1.0)
    assert cfg.t_C == pytest.approx(dims.t_C)
    assert cfg.dk_d0 == pytest.approx(2 * np.pi / 3, rel=1e-12)


def test_dimensionless_rejections():
    with pytest.raises(ConfigError):
        to_dimensionless(PhysicalSetup(), 0.0)
    with pytest.raises(ConfigError):
        to_dimensionless(PhysicalSetup(g=None), 1.0)


def test_setup_validation():
    with pytest.raises(ConfigError):
        PhysicalSetup(d0=-1.0)
    with pytest.raises(ConfigError):
        PhysicalSetup(N=1)


def test_report_keys():
    r = report(PhysicalSetup(), delta=TWO_PI * 50e3)
    assert r["axial_clear"] is True
    assert r["dimensionless"]["g"] == pytest.approx(2.0)
    assert r["theta_deg"] == pytest.approx(0.6)
