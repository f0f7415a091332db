"""Exception types shared across the toolkit."""


class HetnoiseError(Exception):
    """Base class for all toolkit errors."""


class InvalidInput(HetnoiseError, ValueError):
    """Raised when data fed to an operation violates its preconditions."""


class InvalidConfig(HetnoiseError, ValueError):
    """Raised when a configuration object carries out-of-range values."""


class TrainingFailure(HetnoiseError, RuntimeError):
    """Raised when optimization produces non-finite losses, gradients or weights.

    ``where`` names the offending parameter (e.g. ``"layer 1 weights"``) when known.
    """

    def __init__(self, message: str, where: str | None = None):
        super().__init__(message if where is None else f"{message} ({where})")
        self.where = where


class UndefinedMetric(HetnoiseError, ValueError):
    """Raised when a metric has no defined value for the given inputs."""
