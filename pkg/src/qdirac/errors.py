"""Exception and warning types shared across the package."""


class QDiracError(Exception):
    """Base class for all package errors."""


class DomainError(QDiracError, ValueError):
    """An argument lies outside the domain of an operation."""


class LatticeIndexError(QDiracError, IndexError):
    """A lattice value needed by a difference operator is not available."""


class NumericalError(QDiracError, ArithmeticError):
    """A numerical procedure failed (bracketing, convergence, overflow)."""


class BracketError(NumericalError):
    """No sign change was found where a root was expected."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(NumericalError):
    """An iteration did not reach its tolerance."""

    def __init__(self, message, last_change=None):
        super().__init__(message)
        self.last_change = last_change


class DegenerateNormalizationError(NumericalError):
    pass


class PrecisionLossWarning(RuntimeWarning):
    """Cancellation exceeded the mantissa available at the highest precision."""


class MissedEigenvalueWarning(RuntimeWarning):
    """The eigenvalue count in a scan window disagrees with the asymptotic law."""
