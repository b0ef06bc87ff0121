"""Small input-checking helpers shared by the public functions."""

import numpy as np

from .errors import ConfigError


def check_positive(name, value, allow_zero=False):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"{name} must be {bound}, got {value!r}")
    return value


def check_spins(s, n=None):
    """Return ``s`` as a float array of +-1 values, optionally of length ``n``."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise ValueError(f"spin configuration must be 1-D, got shape {s.shape}")
    if n is not None and s.size != n:
        raise ValueError(f"spin configuration has {s.size} sites, expected {n}")
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("spin configuration entries must be +1 or -1")
    return s


def check_square(name, a, symmetric=False, rtol=1e-12):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if symmetric:
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.conj().T).max() > rtol * scale:
            raise ValueError(f"{name} must be symmetric")
    return a
