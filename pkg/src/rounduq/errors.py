"""Exception types raised across the package.

Validation problems subclass ``ValueError`` and numerical breakdowns subclass
``ArithmeticError`` so the CLI can map them to distinct exit codes.
"""


class RoundUQError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RoundUQError, ValueError):
    """Arguments outside the documented domain."""


class NumericalError(RoundUQError, ArithmeticError):
    """A computation could not be completed under the arithmetic model."""


class OverflowOrUnderflow(NumericalError):
    """A rounded magnitude left the normalized range of the target format."""


class NonFinite(NumericalError):
    """NaN or infinite value handed to the rounding emulator."""


class DivisionByZero(NumericalError, ZeroDivisionError):
    pass


class ZeroReference(NumericalError):
    """Relative error requested against an exact value of zero."""


class NotRepresentable(ValidationError):
    """Operand is not a member of the target format."""


class BoundInvalid(NumericalError):
    """Deterministic constant requested where n*u >= 1."""


class InfeasibleConfidence(ValidationError):
    pass


class ScanCapExceeded(NumericalError):
    pass


class EmptyInput(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ZeroPivot(NumericalError):
    def __init__(self, index: int):
        super().__init__(f"zero pivot at index {index}")
        self.index = index


class SingularReference(NumericalError):
    pass


class DomainError(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class TrialFailure(NumericalError):
    """Wraps an exception raised inside one trial of an experiment."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"trial {index} failed: {cause!r}")
        self.index = index
        self.cause = cause
