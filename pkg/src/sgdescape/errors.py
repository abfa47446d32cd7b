"""Exception types shared across the package."""


class EscapeError(Exception):
    """Base class for package errors."""


class DimensionError(EscapeError, ValueError):
    """An input vector or matrix has the wrong shape."""


class LandscapeError(EscapeError, ValueError):
    """Invalid landscape or domain construction."""


class NumericalError(EscapeError, ArithmeticError):
    """A simulated state became non-finite."""

    def __init__(self, message, step=None, trial=None):
        super().__init__(message)
        self.step = step
        self.trial = trial


class ConfigError(EscapeError, ValueError):
    """Run configuration failed validation."""
