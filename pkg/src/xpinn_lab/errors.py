"""Exception hierarchy shared by every module."""


class XpinnLabError(Exception):
    """Base class for all package errors."""


class InvalidInputError(XpinnLabError, ValueError):
    pass


class ShapeError(XpinnLabError, ValueError):
    pass


class UnsupportedOrderError(XpinnLabError, ValueError):
    pass


class NumericOverflowError(XpinnLabError, FloatingPointError):
    """A taped primitive produced NaN or Inf."""

    def __init__(self, primitive: str, message: str = ""):
        self.primitive = primitive
        super().__init__(message or f"non-finite value produced by primitive '{primitive}'")


class DomainError(XpinnLabError, ValueError):
    pass


class CoverageError(XpinnLabError, ValueError):
    pass


class ParseError(XpinnLabError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(XpinnLabError, ValueError):
    pass


class UnsupportedTargetError(XpinnLabError, ValueError):
    pass


class NumericError(XpinnLabError, ArithmeticError):
    """An iterative solver failed to converge."""


class TrainingDiverged(XpinnLabError, ArithmeticError):
    """Training loss blew up; ``result`` holds the partial run."""

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)
