"""Exception types shared across the package."""


class NesttError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(NesttError, ValueError):
    """An argument's shape is inconsistent with the problem dimensions."""


class ParameterError(NesttError, ValueError):
    """Algorithm parameters violate a validity condition."""


class ConvergenceError(NesttError, RuntimeError):
    """An iterative subsolver hit its iteration cap.

    Carries the last residual so callers can decide whether the result is
    still usable.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ConfigError(NesttError, ValueError):
    """An experiment config is malformed; message names the offending key."""
