"""Spin-phonon chains of trapped ions: couplings, classical ground states,
mean-field annealing, small-system exact diagonalization and experimental
parameter estimates."""

from .errors import CapacityError, ConfigError, NumericalError, SpinPhononError, UnstableFrameError
from .lattice import ChainConfig, HoppingModel, ModeData, build_hopping_matrix, chain_modes, normal_modes

__all__ = [
    "CapacityError",
    "ChainConfig",
    "ConfigError",
    "HoppingModel",
    "ModeData",
    "NumericalError",
    "SpinPhononError",
    "UnstableFrameError",
    "build_hopping_matrix",
    "chain_modes",
    "normal_modes",
]
