"""Radial phonon hopping structure of an ion chain and its normal modes.

Energies are in units where the zigzag detuning ``delta_target`` and the
spin-phonon coupling ``g`` are typically 1.  The rotating-wave form of the
hopping Hamiltonian (``omega_x >> t_C``) is assumed throughout and never
checked numerically.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import zeta

from ._validation import check_positive, check_square
from .errors import ConfigError, UnstableFrameError

ZETA3 = float(zeta(3.0))

# Sum_{k > K} 1/k^3 < 1/(2 K^2) = 5e-13 for K = 1e6.
CL3_TERMS = 1_000_000
_CL3_BLOCK = 4_000_000  # max cos evaluations held in memory at once


class HoppingModel(str, Enum):
    PBC_DIPOLAR = "PBC_DIPOLAR"
    OPEN_DIPOLAR = "OPEN_DIPOLAR"
    OPEN_NN = "OPEN_NN"


@dataclass(frozen=True)
class ChainConfig:
    """Geometry and coupling strengths of one simulated chain.

    ``hopping_prefactor`` is the coefficient of ``t_C * F_{j,l}`` in the
    single-particle matrix ``A``.  The default 0.5 is the ``(1/2) sum t a^dag a``
    normalisation; 1.0 makes ``t_C`` the bare bond amplitude, which is the
    convention under which the nearest-neighbour figure values reproduce.
    ``pbc_images`` selects the full periodic-image dipolar sum for the ring;
    with ``False`` the minimum-image kernel is used instead.
    """

    N: int
    t_C: float
    delta_target: float = 1.0
    g: float = 1.0
    dk_d0: float = 0.0
    hopping_model: HoppingModel = HoppingModel.PBC_DIPOLAR
    hopping_prefactor: float = 0.5
    pbc_images: bool = True

    def __post_init__(self):
        try:
            model = HoppingModel(self.hopping_model)
        except ValueError:
            names = ", ".join(m.value for m in HoppingModel)
            raise ConfigError(f"unknown hopping_model {self.hopping_model!r}; expected one of {names}")
        object.__setattr__(self, "hopping_model", model)
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if model is HoppingModel.PBC_DIPOLAR and self.N % 2:
            raise ConfigError(f"PBC_DIPOLAR requires even N, got {self.N}")
        check_positive("t_C", self.t_C)
        check_positive("delta_target", self.delta_target)
        check_positive("g", self.g, allow_zero=True)
        check_positive("hopping_prefactor", self.hopping_prefactor)
        if not 0.0 <= self.dk_d0 < 2 * np.pi:
            raise ConfigError(f"dk_d0 must lie in [0, 2pi), got {self.dk_d0!r}")

    @property
    def t_eff(self):
        """Coefficient of the cosine series in the ring dispersion (``t_C`` by default)."""
        return 2.0 * self.hopping_prefactor * self.t_C

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ModeData:
    """Normal modes of the rotated phonon Hamiltonian.

    ``wavefunctions[j, n]`` is the amplitude of mode ``n`` on site ``j``.
    Ring modes are labelled by their plane-wave index; open-chain modes are
    sorted by descending frequency so the zigzag mode is last.
    """

    frequencies: np.ndarray
    wavefunctions: np.ndarray
    hopping_model: HoppingModel
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.frequencies.size

    @property
    def zigzag_index(self):
        return int(np.argmin(self.frequencies))

    @property
    def min_frequency(self):
        return float(self.frequencies.min())


def hopping_kernel(cfg):
    """Dimensionless hopping kernel ``F_{j,l}`` for the configured model."""
    N = cfg.N
    j = np.arange(N)
    dist = np.abs(j[:, None] - j[None, :])
    model = cfg.hopping_model
    if model is HoppingModel.OPEN_NN:
        return (dist == 1).astype(float)
    if model is HoppingModel.OPEN_DIPOLAR:
        with np.errstate(divide="ignore"):
            return np.where(dist == 0, 0.0, 1.0 / np.maximum(dist, 1) ** 3)
    if not cfg.pbc_images:
        # Minimum-image ring: the antipodal bond |j-l| = N/2 appears once per row.
        q = np.minimum(dist, N - dist)
        return np.where(q == 0, 0.0, 1.0 / np.maximum(q, 1) ** 3)
    # Periodic images: F_q = sum_m 1/|q + mN|^3, written with Hurwitz zeta.
    # The q = 0 entry collects the self-images 2 zeta(3)/N^3.
    q = np.where(dist == 0, 1, dist).astype(float) / N
    F = (zeta(3.0, q) + zeta(3.0, 1.0 - q)) / N**3
    return np.where(dist == 0, 2.0 * ZETA3 / N**3, F)


def pbc_delta_x(delta_target, t_eff):
    """On-site detuning placing the ring minimum ``delta(pi)`` at ``delta_target``."""
    return delta_target + 0.75 * ZETA3 * t_eff


def delta_x_from_target(cfg):
    """On-site detuning ``delta_x`` such that ``min_n delta_n == cfg.delta_target``.

    The ring with periodic images has the closed form
    ``delta_target + (3/4) zeta(3) t_C``.  For every other kernel the spectrum
    shifts rigidly with the on-site value, so the lowest eigenvalue of the
    hopping part fixes it exactly.
    """
    if cfg.hopping_model is HoppingModel.PBC_DIPOLAR and cfg.pbc_images:
        return pbc_delta_x(cfg.delta_target, cfg.t_eff)
    B = cfg.hopping_prefactor * cfg.t_C * hopping_kernel(cfg)
    lowest = np.linalg.eigvalsh(B)[0]
    return float(cfg.delta_target - lowest)


def build_hopping_matrix(cfg, onsite=None):
    """Single-particle phonon matrix ``A = delta_x I + p t_C F``.

    ``onsite`` overrides the detuning ``delta_x``; by default it is derived
    from ``cfg.delta_target``.
    """
    if onsite is None:
        onsite = delta_x_from_target(cfg)
    A = cfg.hopping_prefactor * cfg.t_C * hopping_kernel(cfg)
    A[np.diag_indices(cfg.N)] += onsite
    return A


def plane_waves(N):
    j = np.arange(N)
    return np.exp(2j * np.pi * np.outer(j, j) / N) / np.sqrt(N)


def normal_modes(A, hopping_model=HoppingModel.OPEN_DIPOLAR, atol=1e-10):
    """Diagonalise a symmetric hopping matrix.

    Ring matrices are diagonalised in the plane-wave basis
    ``exp(2 pi i n j / N)/sqrt(N)`` so degenerate ``n, N-n`` pairs keep their
    momentum labels.  Raises :class:`UnstableFrameError` when any frequency
    is not positive.
    """
    A = check_square("A", A, symmetric=True)
    hopping_model = HoppingModel(hopping_model)
    N = A.shape[0]
    scale = max(np.abs(A).max(), 1.0)
    if hopping_model is HoppingModel.PBC_DIPOLAR:
        M = plane_waves(N)
        D = M.conj().T @ A @ M
        off = np.abs(D - np.diag(np.diag(D))).max()
        if off > atol * scale:
            raise ValueError(f"matrix is not circulant (off-diagonal residual {off:.3e})")
        freqs = np.real(np.diag(D)).copy()
    else:
        freqs, M = np.linalg.eigh(A)
        order = np.argsort(freqs)[::-1]
        freqs, M = freqs[order], M[:, order]
        # sign gauge: first non-negligible component positive
        for n in range(N):
            k = np.flatnonzero(np.abs(M[:, n]) > 1e-8)[0]
            if M[k, n] < 0:
                M[:, n] = -M[:, n]
    if np.any(freqs <= 0):
        raise UnstableFrameError(
            f"unstable rotated frame: lowest mode frequency {freqs.min():.6g} <= 0"
        )
    return ModeData(frequencies=freqs, wavefunctions=M, hopping_model=hopping_model)


def chain_modes(cfg):
    """Normal modes for a configured chain."""
    return normal_modes(build_hopping_matrix(cfg), cfg.hopping_model)


def clausen_cos3(x, terms=CL3_TERMS):
    """``sum_{k>=1} cos(k x)/k^3`` by direct summation (absolute error < 5e-13)."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    out = np.zeros(flat.size)
    chunk = max(1000, _CL3_BLOCK // max(flat.size, 1))
    for start in range(1, terms + 1, chunk):
        k = np.arange(start, min(start + chunk, terms + 1), dtype=float)
        out += (np.cos(np.outer(flat, k)) / k**3).sum(axis=1)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def dispersion_pbc(x, cfg, delta_x=None):
    """Continuum ring dispersion ``delta(x) = delta_x + t_C Cl_3(x)``."""
    if cfg.hopping_model is not HoppingModel.PBC_DIPOLAR:
        raise ConfigError("dispersion_pbc requires hopping_model PBC_DIPOLAR")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 2 * np.pi)):
        raise ValueError("x must lie in [0, 2pi]")
    if delta_x is None:
        delta_x = pbc_delta_x(cfg.delta_target, cfg.t_eff)
    return delta_x + cfg.t_eff * clausen_cos3(x)
