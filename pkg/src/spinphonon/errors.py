"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SpinPhononError(Exception):
    exit_code = 1


class ConfigError(SpinPhononError, ValueError):
    """Invalid or missing configuration value."""

    exit_code = 2


class CapacityError(SpinPhononError):
    """A size guard was exceeded (enumeration width, Hilbert-space dimension)."""

    exit_code = 3


class NumericalError(SpinPhononError, RuntimeError):
    exit_code = 4


class UnstableFrameError(NumericalError):
    """A rotated-frame phonon frequency is not positive."""
