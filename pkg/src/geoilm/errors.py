"""Exception types shared across the package."""


class GeoilmError(Exception):
    """Base class for all package errors."""


class ValidationError(GeoilmError):
    """Input data or configuration violates a documented contract."""


class NumericalError(GeoilmError):
    """A computation produced a non-finite value where one is required."""


class BudgetError(GeoilmError):
    """A precomputation would exceed its configured memory budget."""
