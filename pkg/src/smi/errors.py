"""Exception types raised across the package."""


class SmiError(Exception):
    """Base class for all package errors."""


class ContractError(SmiError, ValueError):
    """Arguments violate an operation's preconditions (shapes, ranges, support)."""


class CapabilityError(SmiError):
    """A model lacks an optional capability required by the requested operation."""


class NumericalError(SmiError, ArithmeticError):
    """A matrix is singular, ill-conditioned or not positive semi-definite."""


class CapacityError(SmiError):
    """An enumeration would exceed the supported state-space size."""


class DataValidationError(SmiError, ValueError):
    """Input data is malformed or violates model constraints."""


class SelectionError(SmiError):
    """No valid rows are available to select an influence parameter from."""


class ConfigError(SmiError, ValueError):
    """Run configuration is invalid."""
