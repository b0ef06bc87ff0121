"""Effective Ising couplings mediated by the rotated-frame phonons."""

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NumericalError
from .lattice import ZETA3, HoppingModel, chain_modes

LOG2 = float(np.log(2.0))


class Provenance(str, Enum):
    EXACT_MODE_SUM = "EXACT_MODE_SUM"
    ANALYTIC = "ANALYTIC"


@dataclass(frozen=True)
class AnalyticConstants:
    xi: float
    J_exp: float
    J_dip: float


@dataclass(frozen=True)
class CouplingMatrix:
    """Dense ``N x N`` couplings ``J_{j,l}``.

    Exact mode sums keep their (spin-independent) diagonal; analytic
    matrices have a zero diagonal.
    """

    J: np.ndarray
    provenance: Provenance
    dk_d0: float
    constants: Optional[AnalyticConstants] = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.J.shape[0]

    def offdiagonal(self):
        """Copy of ``J`` with the diagonal zeroed."""
        J = self.J.copy()
        np.fill_diagonal(J, 0.0)
        return J


def dressing_factor(N, dk_d0):
    j = np.arange(N)
    return np.cos(dk_d0 * (j[:, None] - j[None, :]))


def undressed_mode_sum(modes, g):
    """``-g^2 sum_n M_{j,n} M*_{l,n} / delta_n`` as a complex matrix."""
    M = modes.wavefunctions
    return -(g**2) * (M / modes.frequencies) @ M.conj().T


def exact_couplings(modes, cfg, imag_tol=1e-12):
    """Mode-sum couplings dressed by ``cos(dk_d0 (j - l))``."""
    if np.any(modes.frequencies <= 0):
        raise NumericalError("exact couplings need all mode frequencies > 0")
    K = undressed_mode_sum(modes, cfg.g)
    scale = max(np.abs(K).max(), 1e-300)
    residue = np.abs(K.imag).max()
    if residue > imag_tol * max(scale, 1.0):
        raise NumericalError(f"mode sum is not real (imaginary residue {residue:.3e})")
    J = dressing_factor(cfg.N, cfg.dk_d0) * K.real
    J = 0.5 * (J + J.T)
    return CouplingMatrix(J=J, provenance=Provenance.EXACT_MODE_SUM, dk_d0=cfg.dk_d0,
                          meta={"hopping_model": cfg.hopping_model.value})


def phase_dressed_couplings(modes, cfg):
    """Couplings with the optical phase attached to each site inside the mode sum.

    Each site enters the spin-phonon term with ``M_{j,n} exp(-i dk_d0 j)``;
    only the Hermitian (real) part of the resulting kernel contributes to a
    ``sigma^z sigma^z`` energy.  Independent construction of the cosine rule
    used by :func:`exact_couplings`.
    """
    phase = np.exp(-1j * cfg.dk_d0 * np.arange(cfg.N))
    M = modes.wavefunctions * phase[:, None]
    K = -(cfg.g**2) * (M / modes.frequencies) @ M.conj().T
    return CouplingMatrix(J=K.real.copy(), provenance=Provenance.EXACT_MODE_SUM,
                          dk_d0=cfg.dk_d0, meta={"construction": "phase-in-mode-sum"})


def analytic_constants(delta_N2, t_C, g=1.0):
    """Decay length and amplitudes of the exponential-plus-dipolar form."""
    xi = np.sqrt(LOG2 / 2.0) * np.sqrt(t_C / delta_N2)
    J_exp = xi * g**2 / (t_C * LOG2)
    J_dip = g**2 * t_C / (2.0 * (delta_N2 + 1.75 * ZETA3 * t_C) ** 2)
    return AnalyticConstants(xi=float(xi), J_exp=float(J_exp), J_dip=float(J_dip))


def analytic_couplings(cfg):
    """Long-chain closed form, dressed and with zero diagonal.

    The derivation assumes a ring; other hopping models are accepted with a
    warning and the mismatch is recorded in ``meta``.
    """
    mismatch = cfg.hopping_model is not HoppingModel.PBC_DIPOLAR
    if mismatch:
        warnings.warn(
            f"analytic couplings assume PBC_DIPOLAR, chain uses {cfg.hopping_model.value}",
            stacklevel=2,
        )
    c = analytic_constants(cfg.delta_target, cfg.t_eff, cfg.g)
    j = np.arange(cfg.N)
    d = j[:, None] - j[None, :]
    a = np.abs(d)
    with np.errstate(divide="ignore"):
        J0 = -((-1.0) ** a) * c.J_exp * np.exp(-a / c.xi) + c.J_dip / np.maximum(a, 1) ** 3
    J0[a == 0] = 0.0
    J = np.cos(cfg.dk_d0 * d) * J0
    return CouplingMatrix(J=J, provenance=Provenance.ANALYTIC, dk_d0=cfg.dk_d0, constants=c,
                          meta={"hopping_model": cfg.hopping_model.value, "model_mismatch": mismatch})


def couplings_for(cfg, provenance=Provenance.EXACT_MODE_SUM):
    if Provenance(provenance) is Provenance.ANALYTIC:
        return analytic_couplings(cfg)
    return exact_couplings(chain_modes(cfg), cfg)


@dataclass(frozen=True)
class CouplingComparison:
    separation: np.ndarray
    site: np.ndarray
    j_exact: np.ndarray
    j_analytic: np.ndarray
    rel_err: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.separation.tolist(), self.j_exact.tolist(),
                        self.j_analytic.tolist(), self.rel_err.tolist()))


def compare_couplings(exact, analytic, j0=4):
    """Couplings between site ``j0`` and sites at separations ``1 .. N//2``.

    Partner sites are ``j0 + d``, folded to ``j0 - d`` when that runs past
    the end of the chain.
    """
    N = exact.N
    if analytic.N != N:
        raise ValueError("coupling matrices differ in size")
    if not 0 <= j0 < N:
        raise ValueError(f"reference site {j0} outside 0..{N - 1}")
    d = np.arange(1, N // 2 + 1)
    site = np.where(j0 + d < N, j0 + d, j0 - d)
    je = exact.J[j0, site]
    ja = analytic.J[j0, site]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(je == ja, 0.0, np.abs(ja - je) / np.abs(je))
    meta = {
        "j0": j0,
        "exact_model": exact.meta.get("hopping_model"),
        "model_mismatch": bool(analytic.meta.get("model_mismatch", False)),
    }
    return CouplingComparison(separation=d, site=site, j_exact=je, j_analytic=ja, rel_err=rel, meta=meta)
