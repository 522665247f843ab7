"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Malformed or out-of-range input."""


class DegenerateMetricError(ArithmeticError):
    """A linear-fractional ratio has a zero denominator."""


class CapacityError(ValueError):
    """The requested exhaustive computation is too large."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StationaryPoint(ArithmeticError):
    """Raised when an ascent direction has zero norm."""
