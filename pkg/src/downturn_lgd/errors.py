"""Exception hierarchy shared by all modules."""


class LgdError(Exception):
    """Base class for errors raised by this package."""


class DomainError(LgdError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(LgdError, ValueError):
    """Input is valid but makes the requested quantity undefined.

    ``partial`` optionally carries whatever was computed before the
    degeneracy was hit, so callers can still report it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DataValidationError(LgdError, ValueError):
    """Observation data failed validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
