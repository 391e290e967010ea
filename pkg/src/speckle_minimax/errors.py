"""Exception types raised across the package."""


class SpeckleError(Exception):
    """Base class for all package errors."""


class OutOfBox(SpeckleError, ValueError):
    pass


class BudgetExceeded(SpeckleError, ValueError):
    pass


class InvalidDims(SpeckleError, ValueError):
    pass


class DimensionMismatch(SpeckleError, ValueError):
    pass


class NotPositiveDefinite(SpeckleError, ArithmeticError):
    """A per-look covariance sigma_z^2 I + A X^2 A^T failed to factorize."""


class SearchSpaceTooLarge(SpeckleError, ValueError):
    pass


class SingularNormalMatrix(SpeckleError, ArithmeticError):
    pass


class TooFewPoints(SpeckleError, ValueError):
    pass


class NonPositiveInput(SpeckleError, ValueError):
    pass


class ParseError(SpeckleError, ValueError):
    """Malformed config file. ``key`` and ``line`` locate the problem when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(SpeckleError, ValueError):
    """Config failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
