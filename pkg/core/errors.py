from typing import Optional


class ProspectError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ProspectError, ValueError):
    pass


class SizeError(ProspectError, ValueError):
    pass


class PreconditionError(ProspectError, ValueError):
    pass


class IndexOutOfRangeError(ProspectError, IndexError):
    pass


class NonSmoothError(ProspectError, ValueError):
    """Raised when a gradient is requested for the ν = 0 objective."""


class CapabilityError(ProspectError, TypeError):
    """Raised when an optimizer needs an oracle method the loss does not provide."""


class DegenerateError(ProspectError, ValueError):
    pass


class NumericalError(ProspectError, ArithmeticError):
    pass


class ConvergenceError(ProspectError, RuntimeError):
    pass


class DataError(ProspectError, ValueError):
    pass


class SchemaError(DataError):
    pass


class ShapeError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(ProspectError, ValueError):
    def __init__(self, message: str, key: Optional[str] = None, suggestion: Optional[str] = None):
        if suggestion:
            message = f"{message} (did you mean '{suggestion}'?)"
        super().__init__(message)
        self.key = key
        self.suggestion = suggestion
