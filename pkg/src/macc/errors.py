"""Exception types raised across the package."""


class MaccError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MaccError, ValueError):
    """A configuration value is missing, malformed or violates an invariant."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SchedulingError(MaccError, RuntimeError):
    """An event was scheduled before the current simulation clock."""


class ModelFormatError(MaccError):
    """A model file exists but cannot be decoded."""


class DivergenceError(MaccError, FloatingPointError):
    """Training produced a non-finite loss."""


class EnvironmentDone(MaccError, RuntimeError):
    """``step`` was called on an environment whose episode already ended."""
