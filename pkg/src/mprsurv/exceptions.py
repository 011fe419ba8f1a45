"""Exception hierarchy shared across the package."""


class MPRError(Exception):
    """Base class for all errors raised by mprsurv."""


class DataError(MPRError, ValueError):
    """Malformed or inconsistent input data."""


class RankDeficiencyError(MPRError, ValueError):
    """A design matrix does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class NumericalError(MPRError, ArithmeticError):
    """Non-finite likelihood quantities or a singular information matrix."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(MPRError, RuntimeError):
    """Raised when a converged fit is required but was not obtained."""
