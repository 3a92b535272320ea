"""Exception types shared across the package."""


class StiminvError(Exception):
    """Base class for package-specific failures."""


class NonFiniteError(StiminvError):
    """A tensor produced NaN or Inf where finite values are required."""


class DivergenceError(StiminvError):
    """Training produced a non-finite loss.

    Carries the epoch index at which the divergence was detected.
    """

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(StiminvError):
    """Invalid or schema-violating configuration."""


class DataFormatError(StiminvError):
    """Malformed dataset or model file."""
