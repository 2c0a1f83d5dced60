"""Exception types shared across the package."""


class ErgodicMlmcError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ErgodicMlmcError):
    """Invalid or contradictory run configuration."""


class NumericOverflowError(ErgodicMlmcError):
    """A simulated state became non-finite.

    Attributes
    ----------
    time : float
        Simulation time at which the first non-finite value appeared.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class AdaptivityFailureError(ErgodicMlmcError):
    """The adaptive timestep rule produced an unusably small or invalid step."""


class InvalidDataError(ErgodicMlmcError):
    """Data handed to a fitting routine violates its preconditions."""
