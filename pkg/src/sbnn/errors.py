"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class ConfigError(ValueError):
    """Unknown or invalid configuration value (activation kind, loss kind, ...)."""


class DataError(ValueError):
    """Malformed input data (bad target index, non-numeric CSV cell, ...)."""


class DomainError(ValueError):
    """Numeric argument outside the mathematical domain of the operation."""


class StateError(RuntimeError):
    """Operation invoked in an invalid state (e.g. consuming an empty weight cache)."""


class NumericError(ArithmeticError):
    """Numerical routine failed (SVD non-convergence, non-finite loss, ...)."""
