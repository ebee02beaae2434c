"""Exception hierarchy shared by every module."""


class RaycalError(Exception):
    """Base class for all package errors."""


class DimensionError(RaycalError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(RaycalError, ValueError):
    """A configuration value or layer setup is invalid."""


class ContractError(RaycalError, ValueError):
    """A documented precondition of a call was violated."""


class DomainError(RaycalError, ValueError):
    """An argument lies outside the domain of the operation."""


class StateError(RaycalError, RuntimeError):
    """An object is in the wrong state for the requested action."""


class DegeneracyError(RaycalError, ArithmeticError):
    """Numerically degenerate input (zero vectors, parallel axes, ...)."""


class NumericError(RaycalError, ArithmeticError):
    """A forward pass produced NaN or Inf."""


class ValidationError(RaycalError, ValueError):
    """On-disk data failed validation."""


class ParseError(RaycalError, ValueError):
    """A text file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
