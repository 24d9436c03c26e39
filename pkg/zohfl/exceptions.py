"""
Custom exceptions for the zohfl package.
"""

from typing import Optional


class ZoHFLError(Exception):
    """Base exception for zohfl errors"""
    pass


class InvalidDimensionError(ZoHFLError, ValueError):
    """Raised when a dimension is zero or two operands disagree"""
    pass


class InvalidParameterError(ZoHFLError, ValueError):
    """Raised when a scalar parameter is outside its admissible range"""
    pass


class EmptyDataError(ZoHFLError):
    """Raised when an operation needs samples and receives none"""
    pass


class UnsupportedOracleError(ZoHFLError):
    """Raised when a closed-form oracle does not cover the requested case"""
    pass


class EmptyRoundError(ZoHFLError):
    """Raised when a round has no participants to aggregate"""
    pass


class NumericsError(ZoHFLError):
    """Raised when a NaN or Inf would escape a computation"""
    pass


class PartitionInfeasibleError(ZoHFLError):
    """Raised when a dataset cannot be partitioned as requested"""
    pass


class IDXFormatError(ZoHFLError):
    """Raised when an IDX file is malformed"""

    def __init__(self, message: str, path: str = "", offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        where = f" ({path}" + (f" @ byte {offset}" if offset is not None else "") + ")" if path else ""
        super().__init__(f"{message}{where}")


class BadMagicError(IDXFormatError):
    """Raised when an IDX magic number does not match"""
    pass


class TruncatedFileError(IDXFormatError):
    """Raised when an IDX file ends before its declared payload"""
    pass


class CountMismatchError(IDXFormatError):
    """Raised when image and label files disagree on the item count"""
    pass


class InvalidConfigurationError(ZoHFLError):
    """Raised when configuration is invalid"""

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")


class RunAbortedError(ZoHFLError):
    """Raised when a training run aborts; carries the round it failed in"""

    def __init__(self, round_index: int, cause: BaseException):
        self.round = round_index
        self.cause = cause
        super().__init__(f"run aborted at round {round_index}: {cause}")


class MetricsIOError(ZoHFLError):
    """Raised when a run artifact cannot be written or read"""

    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{message}: {path}")
