"""Exception hierarchy shared by the library and the command line."""


class PenscaleError(Exception):
    """Base class for all errors raised by penscale."""


class DataValidationError(PenscaleError, ValueError):
    """Input data violates a structural requirement (levels, shape, constant columns)."""


class ParseError(DataValidationError):
    """A CSV cell could not be read as an integer level."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(PenscaleError, ArithmeticError):
    """A numerical routine failed (factorization, iteration cap, singular system)."""


class NotPositiveDefiniteError(NumericalError):
    """Quadratic term of a QP is indefinite or too badly conditioned."""


class InfeasibleProblemError(NumericalError):
    """Constraint system of a QP admits no feasible point."""

    def __init__(self, message, constraints=()):
        super().__init__(message)
        self.constraints = tuple(constraints)
