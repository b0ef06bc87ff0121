"""Physical trap and laser parameters in SI units.

Angular frequencies are in rad/s; helpers convert to cyclic values
(``omega / 2 pi``), which is how trap frequencies are usually quoted.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import constants

from .errors import ConfigError, NumericalError
from .lattice import ChainConfig, HoppingModel

COULOMB = constants.e**2 / (4 * np.pi * constants.epsilon_0)
TWO_PI = 2 * np.pi

# Neutral atomic masses in u; the singly charged ion lacks one electron.
_ATOMIC_MASS_U = {
    "Be9": 9.0121831,
    "Mg25": 24.9858370,
    "Ca40": 39.9625909,
    "Yb171": 170.9363316,
}
SPECIES = {k: v * constants.atomic_mass - constants.m_e for k, v in _ATOMIC_MASS_U.items()}

LINEAR_CHAIN_RATIO = 5.0
LAMB_DICKE_WARN = 0.3


def ion_mass(ion):
    """Mass in kg for a species label or a numeric mass."""
    if isinstance(ion, str):
        try:
            return SPECIES[ion]
        except KeyError:
            raise ConfigError(f"unknown species {ion!r}; known: {', '.join(SPECIES)}") from None
    mass = float(ion)
    if not mass > 0:
        raise ConfigError(f"ion mass must be > 0, got {ion!r}")
    return mass


@dataclass(frozen=True)
class PhysicalSetup:
    ion: object = "Be9"
    omega_x: float = TWO_PI * 5e6
    omega_z: float = TWO_PI * 192e3
    d0: float = 10e-6
    lambda_eff: float = 320e-9
    theta: float = np.deg2rad(0.6)
    N: int = 20
    charge: int = 1
    g: Optional[float] = TWO_PI * 100e3

    def __post_init__(self):
        for name in ("omega_x", "omega_z", "d0", "lambda_eff"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.theta < 0:
            raise ConfigError(f"theta must be >= 0, got {self.theta!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N!r}")
        if self.charge <= 0:
            raise ConfigError(f"charge must be positive, got {self.charge!r}")
        ion_mass(self.ion)
        if self.omega_x < LINEAR_CHAIN_RATIO * self.omega_z:
            warnings.warn(
                f"omega_x/omega_z = {self.omega_x / self.omega_z:.3g} < {LINEAR_CHAIN_RATIO:g}; "
                "the linear chain may not be stable",
                stacklevel=3,
            )

    @property
    def mass(self):
        return ion_mass(self.ion)

    @property
    def k_eff(self):
        return TWO_PI / self.lambda_eff

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Rate:
    """An angular frequency together with its cyclic value."""

    angular: float

    @property
    def hz(self):
        return self.angular / TWO_PI


def coulomb_coupling(setup):
    """Radial hopping ``t_C = q^2 e^2 / (4 pi eps0 m omega_x d0^3)``."""
    return Rate(setup.charge**2 * COULOMB / (setup.mass * setup.omega_x * setup.d0**3))


def lamb_dicke(setup):
    """``(eta_x, eta_z)`` for the transverse and axial projections of the beat wavevector."""
    hbar = constants.hbar
    eta_x = setup.k_eff * np.cos(setup.theta) * np.sqrt(hbar / (2 * setup.mass * setup.omega_x))
    eta_z = setup.k_eff * np.sin(setup.theta) * np.sqrt(hbar / (2 * setup.mass * setup.omega_z))
    for name, eta in (("eta_x", eta_x), ("eta_z", eta_z)):
        if eta >= LAMB_DICKE_WARN:
            warnings.warn(f"{name} = {eta:.3g} is outside the Lamb-Dicke regime", stacklevel=2)
    return float(eta_x), float(eta_z)


def dk_d0_of(setup):
    """Optical phase per site from the axial projection of the wavevector."""
    return float(setup.k_eff * np.sin(setup.theta) * setup.d0)


def angle_for_dk(setup, dk_d0):
    """Misalignment angle giving the phase step ``dk_d0``; returns (radians, degrees)."""
    ratio = dk_d0 / (setup.d0 * setup.k_eff)
    if not 0 <= ratio <= 1:
        raise ConfigError(
            f"phase step {dk_d0!r} not reachable: needs sin(theta) = {ratio:.4g} with |dk| = {setup.k_eff:.4g} 1/m"
        )
    theta = float(np.arcsin(ratio))
    return theta, float(np.degrees(theta))


def _length_scale(mass, omega_z, charge=1):
    return (charge**2 * COULOMB / (mass * omega_z**2)) ** (1 / 3)


def _forces(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def axial_hessian(u):
    """Scaled axial Hessian; eigenvalues are ``(omega / omega_z)^2``."""
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    k = 2.0 / d**3
    return np.eye(u.size) + np.diag(k.sum(axis=1)) - k


def scaled_positions(N, tol=1e-12, max_iter=200):
    """Equilibrium positions in units of ``(q^2 e^2/(4 pi eps0 m omega_z^2))^(1/3)``.

    Damped Newton on the force balance, started from an evenly spaced guess
    whose width follows the known ``N^0.56`` growth of the chain length.
    """
    if N == 1:
        return np.zeros(1)
    u = np.linspace(-1.0, 1.0, N) * 1.06 * N**0.56
    f = _forces(u)
    for _ in range(max_iter):
        if np.abs(f).max() < tol:
            break
        step = np.linalg.solve(axial_hessian(u), -f)
        lam = 1.0
        while True:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                ft = _forces(trial)
                if np.abs(ft).max() < np.abs(f).max() or lam < 1e-3:
                    break
            lam *= 0.5
            if lam < 1e-10:
                raise NumericalError(f"equilibrium line search stalled for N = {N}")
        u, f = trial, ft
    else:
        raise NumericalError(f"equilibrium search did not converge for N = {N}")
    if np.abs(f).max() >= tol:
        raise NumericalError(f"equilibrium residual {np.abs(f).max():.3e} for N = {N}")
    # enforce the mirror symmetry that the exact solution has
    return 0.5 * (u - u[::-1])


@dataclass(frozen=True)
class Equilibrium:
    positions: np.ndarray
    length_scale: float
    residual: float

    @property
    def central_spacing(self):
        c = self.positions.size // 2
        return float(self.positions[c] - self.positions[c - 1])

    @property
    def mean_spacing(self):
        return float((self.positions[-1] - self.positions[0]) / (self.positions.size - 1))


def equilibrium_positions(N, omega_z, ion="Be9", charge=1):
    u = scaled_positions(N)
    ell = _length_scale(ion_mass(ion), omega_z, charge)
    return Equilibrium(positions=u * ell, length_scale=ell, residual=float(np.abs(_forces(u)).max()))


def omega_z_for_spacing(N, d0, ion="Be9", charge=1, spacing="mean"):
    """Axial frequency whose equilibrium chain has spacing ``d0``.

    Positions scale as ``omega_z^(-2/3)``, so one scaled solve fixes the answer.
    """
    u = scaled_positions(N)
    if spacing == "mean":
        du = (u[-1] - u[0]) / (N - 1)
    elif spacing == "central":
        du = u[N // 2] - u[N // 2 - 1]
    else:
        raise ConfigError(f"spacing must be 'mean' or 'central', got {spacing!r}")
    ell = d0 / du
    return float(np.sqrt(charge**2 * COULOMB / (ion_mass(ion) * ell**3)))


def axial_modes(N, omega_z):
    """Axial normal-mode angular frequencies, ascending."""
    ev = np.linalg.eigvalsh(axial_hessian(scaled_positions(N)))
    return omega_z * np.sqrt(ev)


def radial_modes(N, omega_x, omega_z):
    """Transverse normal-mode angular frequencies, ascending."""
    u = scaled_positions(N)
    A = axial_hessian(u)
    B = (omega_x / omega_z) ** 2 * np.eye(N) - 0.5 * (A - np.eye(N))
    ev = np.linalg.eigvalsh(B)
    if ev[0] <= 0:
        raise NumericalError("linear chain unstable against zigzag buckling")
    return omega_z * np.sqrt(ev)


@dataclass(frozen=True)
class ClearanceReport:
    omega_z_max: float
    radial_min: float
    radial_max: float
    gap: float

    @property
    def clear(self):
        return self.gap > 0


def axial_mode_clearance(setup, N=None):
    N = setup.N if N is None else N
    ax = axial_modes(N, setup.omega_z)
    rad = radial_modes(N, setup.omega_x, setup.omega_z)
    return ClearanceReport(omega_z_max=float(ax[-1]), radial_min=float(rad[0]),
                           radial_max=float(rad[-1]), gap=float(rad[0] - ax[-1]))


@dataclass(frozen=True)
class Dimensionless:
    t_C: float
    g: float
    dk_d0: float
    delta: float  # zigzag detuning in rad/s used as the energy unit
    meta: dict = field(default_factory=dict)


def to_dimensionless(setup, delta):
    """``t_C``, ``g`` and ``dk_d0`` in units of the zigzag detuning ``delta`` (rad/s)."""
    if not delta > 0:
        raise ConfigError(f"delta must be > 0, got {delta!r}")
    if setup.g is None:
        raise ConfigError("setup.g is required for a dimensionless conversion")
    return Dimensionless(t_C=coulomb_coupling(setup).angular / delta, g=setup.g / delta,
                         dk_d0=dk_d0_of(setup), delta=delta)


def from_dimensionless(dims, template):
    """Physical setup reproducing ``dims`` with trap geometry taken from ``template``.

    ``omega_x`` is solved from ``t_C``, ``g`` rescaled, and ``theta`` from ``dk_d0``.
    """
    t_C = dims.t_C * dims.delta
    omega_x = template.charge**2 * COULOMB / (template.mass * t_C * template.d0**3)
    theta, _ = angle_for_dk(template, dims.dk_d0)
    return template.replace(omega_x=omega_x, g=dims.g * dims.delta, theta=theta)


def to_chain_config(setup, delta, hopping_model=HoppingModel.PBC_DIPOLAR, **kw):
    dims = to_dimensionless(setup, delta)
    dk = dims.dk_d0 % TWO_PI
    return ChainConfig(N=setup.N, t_C=dims.t_C, delta_target=1.0, g=dims.g, dk_d0=dk,
                       hopping_model=hopping_model, **kw)


def report(setup, delta=None):
    """All derived quantities as a plain dict (cyclic frequencies in Hz)."""
    t_C = coulomb_coupling(setup)
    eta_x, eta_z = lamb_dicke(setup)
    clearance = axial_mode_clearance(setup)
    out = {
        "mass_kg": setup.mass,
        "t_C_hz": t_C.hz,
        "t_C_rad_s": t_C.angular,
        "eta_x": eta_x,
        "eta_z": eta_z,
        "theta_deg": float(np.degrees(setup.theta)),
        "dk_d0": dk_d0_of(setup),
        "omega_z_for_d0_hz": omega_z_for_spacing(setup.N, setup.d0, setup.ion, setup.charge) / TWO_PI,
        "omega_z_max_hz": clearance.omega_z_max / TWO_PI,
        "radial_min_hz": clearance.radial_min / TWO_PI,
        "axial_radial_gap_hz": clearance.gap / TWO_PI,
        "axial_clear": clearance.clear,
    }
    if delta is not None:
        dims = to_dimensionless(setup, delta)
        out["dimensionless"] = {"t_C": dims.t_C, "g": dims.g, "dk_d0": dims.dk_d0}
    return out
