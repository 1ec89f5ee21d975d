"""Custom exceptions and error handlers"""

from typing import Dict, Optional
import structlog
import traceback

logger = structlog.get_logger()


class ResearchError(Exception):
    """Base exception for application errors"""
    def __init__(self, message: str, code: str = "UNKNOWN_ERROR", details: Optional[Dict] = None):
        self.message = message
        self.code = code
        self.details = details or {}
        super().__init__(self.message)


class ConfigurationError(ResearchError):
    """Invalid configuration or command-line input"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, "CONFIG_ERROR", details)


class SelectionError(ResearchError):
    """No admissible combination could be selected"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, "SELECTION_ERROR", details)


class DataIntegrityError(ResearchError):
    """Input data violates an integrity rule"""
    def __init__(self, message: str, details: Optional[Dict] = None, code: str = "DATA_INTEGRITY_ERROR"):
        super().__init__(message, code, details)


class ParseError(DataIntegrityError):
    """Malformed date or number in an input file"""
    def __init__(self, message: str, row: Optional[int] = None, details: Optional[Dict] = None):
        details = details or {}
        if row is not None:
            details["row"] = row
        self.row = row
        super().__init__(message, details, "PARSE_ERROR")


class DuplicateDateError(DataIntegrityError):
    """Same date appears twice in one series"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "DUPLICATE_DATE_ERROR")


class AlignmentError(DataIntegrityError):
    """Segments or series cannot be aligned"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "ALIGNMENT_ERROR")


class DegenerateScaleError(DataIntegrityError):
    """Zero scale factor when linking segments"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "DEGENERATE_SCALE_ERROR")


class WindowError(DataIntegrityError):
    """Not enough history for the requested window"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "WINDOW_ERROR")


class LookaheadError(DataIntegrityError):
    """Read of data beyond the permitted horizon"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "LOOKAHEAD_ERROR")


class StorageError(ResearchError):
    """Reading or writing an artifact on disk failed"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, "STORAGE_ERROR", details)


class NumericalError(ResearchError):
    """Numerical failure"""
    def __init__(self, message: str, details: Optional[Dict] = None, code: str = "NUMERICAL_ERROR"):
        super().__init__(message, code, details)


class DegenerateStatisticError(NumericalError):
    """Statistic undefined for the sample (e.g. zero standard deviation)"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "DEGENERATE_STATISTIC_ERROR")


class InsufficientSampleError(NumericalError):
    """Sample too short for the statistic"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "INSUFFICIENT_SAMPLE_ERROR")


class NonFiniteLossError(NumericalError):
    """Training produced a NaN or infinite loss"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "NON_FINITE_LOSS_ERROR")


class ShapeError(NumericalError):
    """Incompatible tensor shapes"""
    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, details, "SHAPE_ERROR")


# Map error codes to process exit codes
EXIT_CODES = {
    "CONFIG_ERROR": 2,
    "SELECTION_ERROR": 2,
    "DATA_INTEGRITY_ERROR": 3,
    "PARSE_ERROR": 3,
    "DUPLICATE_DATE_ERROR": 3,
    "ALIGNMENT_ERROR": 3,
    "DEGENERATE_SCALE_ERROR": 3,
    "WINDOW_ERROR": 3,
    "LOOKAHEAD_ERROR": 3,
    "NUMERICAL_ERROR": 4,
    "DEGENERATE_STATISTIC_ERROR": 4,
    "INSUFFICIENT_SAMPLE_ERROR": 4,
    "NON_FINITE_LOSS_ERROR": 4,
    "SHAPE_ERROR": 4,
    "STORAGE_ERROR": 1,
    "UNKNOWN_ERROR": 1,
}


def exit_code_for(exc: BaseException) -> int:
    """Exit code for an exception raised by a command"""
    if isinstance(exc, ResearchError):
        return EXIT_CODES.get(exc.code, 1)
    return 1


def handle_command_error(exc: BaseException, debug: bool = False) -> int:
    """Log a command failure and return the process exit code"""
    if isinstance(exc, ResearchError):
        logger.error(
            "Application error",
            error_code=exc.code,
            error_message=exc.message,
            error_details=exc.details,
        )
    else:
        fields = {
            "exception_type": type(exc).__name__,
            "exception_message": str(exc),
        }
        if debug:
            fields["traceback"] = traceback.format_exc()
        logger.error("Unhandled exception", **fields)

    return exit_code_for(exc)
