"""Exception types shared across the package."""


class EntaugError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(EntaugError):
    """A value passed to an operation violates its preconditions."""


class ConfigError(EntaugError):
    """A run configuration is internally inconsistent or incomplete."""


class IngestError(EntaugError):
    """A dataset file is missing, truncated, or malformed."""


class UndefinedValueError(EntaugError):
    """A requested quantity is mathematically undefined for the input."""


class CheckpointError(EntaugError):
    """A checkpoint file cannot be read or has the wrong version."""
