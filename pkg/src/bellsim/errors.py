"""Exception hierarchy shared across the package."""


class BellSimError(Exception):
    """Base class for all package errors."""


class ValidationError(BellSimError, ValueError):
    """Inputs violate a documented contract (domain, shape, consistency)."""


class FormatError(BellSimError, ValueError):
    """A serialized artifact (timetag file, counts JSON, ...) is malformed."""

    def __init__(self, message: str, position=None):
        if position is not None:
            message = f"{message} (at record/line {position})"
        super().__init__(message)
        self.position = position


class NumericalError(BellSimError, ArithmeticError):
    """A numerical procedure failed (no bracket, non-finite objective, ...)."""
