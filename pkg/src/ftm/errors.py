"""Exception hierarchy shared by every module of the package."""


class FTMError(Exception):
    """Base class for all errors raised by ftm."""


class ContractError(FTMError, ValueError):
    """A caller broke a documented precondition (unknown node id, bad width, ...)."""


class ShapeError(ContractError):
    """Operand shapes do not conform for a primitive or a model contract."""


class DomainError(FTMError, ValueError):
    """An operand lies outside the mathematical domain of a primitive."""


class NumericalError(FTMError, ArithmeticError):
    """A NaN/Inf appeared where finite values are required."""


class NonDeterminismError(FTMError, RuntimeError):
    """Two evaluations of the same function at the same point disagree."""


class ConfigurationError(FTMError, ValueError):
    """Invalid model, training, or run configuration."""


class ParseError(FTMError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataValidationError(FTMError, ValueError):
    """Input data violates a documented invariant (negative timestamp, empty split, ...)."""


class EvaluationError(FTMError, ValueError):
    """A metric or harness is undefined for the given inputs."""
