"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class DegenerateDataError(ValueError):
    """Count series that cannot support the requested computation."""


class NumericError(ArithmeticError):
    """Non-finite or otherwise broken numerical intermediate."""


class SingularMatrixError(NumericError):
    """Information matrix too ill-conditioned to invert."""

    def __init__(self, message, condition_number=float("nan")):
        super().__init__(message)
        self.condition_number = condition_number


class TruncationError(NumericError):
    """Series truncation cap reached before the tail bound was met."""
