"""Exception hierarchy shared by the simulator modules."""


class ActiveFLError(Exception):
    """Base class for all errors raised by :mod:`activefl`."""


class DimensionError(ActiveFLError, ValueError):
    """Feature vector or model dimensions do not agree."""


class EmptyDataError(ActiveFLError, ValueError):
    """An operation that needs at least one example received none."""


class NumericError(ActiveFLError, ArithmeticError):
    """A non-finite value appeared during training."""


class ConfigError(ActiveFLError, ValueError):
    """A configuration value violates its invariant.

    ``field`` names the offending setting using dotted config paths,
    e.g. ``policy.uniform_mix``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class GenerationError(ActiveFLError, ValueError):
    """A synthetic dataset specification cannot be realized."""
