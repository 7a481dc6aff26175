"""Exception hierarchy. The CLI maps these onto process exit codes."""


class TollcastError(Exception):
    """Base class for all package errors."""


class ConfigError(TollcastError):
    """Bad or inconsistent study configuration."""


class DataFormatError(TollcastError):
    """Malformed feed, feature table, or model artifact."""


class SchemaMismatchError(DataFormatError):
    """Feature schema hash differs between table and artifact."""


class GridRangeError(TollcastError):
    """Timestamp falls outside the study grid."""


class EmptyTableError(DataFormatError):
    """Feature table construction dropped every candidate row."""

    def __init__(self, message: str, drop_counts=None):
        super().__init__(message)
        self.drop_counts = dict(drop_counts or {})


class NumericError(TollcastError):
    """Non-finite value encountered in a numerical routine."""
