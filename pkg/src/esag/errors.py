"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class EsagError(ValueError):
    """Base class for all package-specific errors."""


class DimensionTooSmallError(EsagError):
    """Raised when the ambient dimension is below 3."""


class DegenerateMeanError(EsagError):
    """Raised when a mean vector has zero (or numerically zero) norm."""


class DegenerateDataError(EsagError):
    """Raised when the data cannot support the requested computation."""


class ZeroRangeError(EsagError):
    """Raised when a covariate column is constant and cannot be standardized."""

    def __init__(self, column: int | str):
        self.column = column
        super().__init__(f"covariate column {column!r} has zero range")


class ContractError(EsagError):
    """Raised when an input violates a documented precondition."""


class IngestionError(EsagError):
    """Raised for malformed rows in an input table.

    Attributes
    ----------
    row : int or None
        One-based data row index (header excluded) of the offending row.
    """

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + message)
