"""Exception types raised across the package."""


class UqRejectError(Exception):
    """Base class for all package errors."""


class ConfigError(UqRejectError, ValueError):
    """Invalid hyperparameters or experiment configuration."""


class InputShapeError(UqRejectError, ValueError):
    """Feature dimensions do not match what a model expects."""


class DataError(UqRejectError, ValueError):
    """Malformed or invalid dataset content."""


class UndefinedMetricError(UqRejectError, ValueError):
    """A rejection metric was requested where its denominator is zero."""


class InvariantError(UqRejectError, RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""
