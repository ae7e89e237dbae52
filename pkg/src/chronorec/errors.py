"""Exception hierarchy shared across the package."""


class ChronoRecError(Exception):
    """Base class for all package errors."""


class ParseError(ChronoRecError):
    """Malformed input file (bad row arity, non-numeric field, empty file)."""


class DataError(ChronoRecError):
    """Structurally invalid data (ids out of range, empty event sets, bad splits)."""


class ConfigError(ChronoRecError):
    """Invalid configuration value or unknown config key."""


class CheckpointError(ChronoRecError):
    """Unreadable, corrupt, or version-incompatible checkpoint file."""


class CausalityError(ChronoRecError):
    """Memory state would leak information from the events being scored."""


class NumericError(ChronoRecError):
    """Non-finite value (NaN/Inf) detected during training or scoring."""
