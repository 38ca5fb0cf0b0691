from typing import Optional


class ViforgeError(Exception):
    """Base class for all errors raised by viforge."""


class InvalidArgumentError(ViforgeError, ValueError):
    """An argument violates an operation's precondition."""


class NotPSDError(ViforgeError, ValueError):
    """A matrix expected to be positive semi-definite has a negative eigenvalue."""


class NumericOverflowError(ViforgeError, ArithmeticError):
    """A computation produced non-finite values."""


class BudgetError(ViforgeError):
    """An enumeration, scan or materialization exceeded its configured cap."""


class UndefinedVarianceError(ViforgeError):
    """A variance was requested from fewer than two observations."""


class ConfigError(ViforgeError):
    """Configuration could not be read or validated."""


class ParseError(ViforgeError):
    """Input file could not be parsed; row and column are 1-based."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.row = row
        self.column = column
