"""Exception hierarchy shared by the solver modules."""


class FreefrontError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FreefrontError, ValueError):
    """An argument lies outside the domain of a model function."""


class ExpressionError(FreefrontError, ValueError):
    """Malformed coefficient expression; ``pos`` is the 0-based character offset."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class ContractError(FreefrontError, ValueError):
    """A documented precondition of an operation does not hold."""


class SolverError(FreefrontError, ArithmeticError):
    """Base class for numerical failures."""


class DegenerateDomainError(SolverError):
    pass


class BlowUpError(SolverError):
    pass


class FrameError(SolverError):
    """The time step moves a front by more than a quarter of the domain."""


class ConvergenceError(SolverError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NoCriticalRadius(SolverError):
    pass


class SubcriticalDomain(SolverError):
    pass


class NotMonostable(SolverError):
    pass


class NoThreshold(SolverError):
    pass


class InconclusiveError(SolverError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class TruncationWarning(UserWarning):
    """The artificial far wall visibly influenced a half-line computation."""
