"""
Error types raised by the copula boosting library.

The CLI maps each class onto a process exit code.
"""
from typing import Optional


class CopulaBoostError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(CopulaBoostError, ValueError):
    """Invalid or inconsistent configuration (unknown keys, links, families)."""

    exit_code = 2


class InputError(CopulaBoostError, ValueError):
    """Malformed input data: schema mismatch, NaN cells, unknown columns."""

    exit_code = 3

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class DomainError(CopulaBoostError, ValueError):
    """Response outside the support or parameter outside its range."""

    exit_code = 3

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"{message} (observation {index})"
        super().__init__(message)


class NumericError(CopulaBoostError, ArithmeticError):
    """Non-finite loss or risk, or a singular system that jitter cannot fix."""

    exit_code = 4

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)
