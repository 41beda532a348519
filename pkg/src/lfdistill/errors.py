class ConfigError(ValueError):
    """Inconsistent shapes, names or hyperparameters."""


class UsageError(RuntimeError):
    """An operation was called out of order or with invalid runtime input."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class ChecksumError(ValueError):
    """A stored file failed its integrity check."""
