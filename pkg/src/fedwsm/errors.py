"""Exception types shared across the package."""


class FedwsmError(Exception):
    pass


class ConfigurationError(FedwsmError):
    """Bad user-supplied configuration (shapes, hyperparameters, config files)."""


class InvariantError(FedwsmError):
    """An internal invariant was violated (e.g. a batch label with zero class weight)."""


class ParseError(FedwsmError):
    """Malformed input file. Carries a location (byte offset or line number)."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class MetricError(FedwsmError):
    """A metric is undefined for the given input (empty batch, K=1 forgetting)."""
