"""Exception hierarchy. The CLI maps each family onto an exit code."""


class OlivineError(Exception):
    """Base class for all toolkit errors."""


class UsageError(OlivineError):
    """Bad arguments or configuration (exit code 1)."""


class ConfigError(UsageError):
    pass


class DataError(OlivineError):
    """Unreadable or malformed input data (exit code 2)."""


class NumericError(OlivineError):
    """NaN/Inf during training or a failed gradient check (exit code 3)."""
