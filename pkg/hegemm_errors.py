"""
Exceptions raised by the hegemm library.

Every error carries the exit status the command line tool reports for it.
"""


class HegemmError(Exception):
    """Base class of all library errors."""

    exit_status = 1


class UsageError(HegemmError):
    """Invalid command line usage."""

    exit_status = 1


class ConfigError(HegemmError, ValueError):
    """Invalid configuration value (backend, cost model or campaign)."""

    exit_status = 1


class DimensionMismatchError(HegemmError, ValueError):
    """Operand dimensions, segment lengths or mask lengths do not agree."""

    exit_status = 2


class CapacityError(HegemmError, ValueError):
    """A vector or working shape does not fit into the slot count."""

    exit_status = 2


class ArithmeticOverflowError(HegemmError, OverflowError):
    """Exact integer arithmetic left the int64 range."""

    exit_status = 3


class MatrixFormatError(HegemmError):
    """A matrix, cuts or cost model file could not be parsed."""

    exit_status = 4
