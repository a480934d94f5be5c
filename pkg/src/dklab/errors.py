"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad schema, unknown keys, degenerate noise, ..."""


class NumericsError(RuntimeError):
    """A numerical routine failed to converge or produced garbage."""


class BlowUpError(NumericsError):
    """The time stepper produced NaN/Inf; carries the last good time."""

    def __init__(self, message, last_good_time=None):
        super().__init__(message)
        self.last_good_time = last_good_time


class AssumptionError(RuntimeError):
    """A coefficient-assumption check failed."""
