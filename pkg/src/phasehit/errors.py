"""Exception hierarchy."""


class PhaseHitError(Exception):
    """Base class for all errors raised by phasehit."""


class ModelMismatchError(PhaseHitError, ValueError):
    """Dimensions or target keys do not match the model."""


class InvalidModelError(PhaseHitError, ValueError):
    """The intensity model violates a structural invariant."""

    def __init__(self, report):
        self.report = report
        super().__init__("invalid model:\n" + "\n".join(str(i) for i in report.errors))


class EmptySetError(PhaseHitError, ValueError):
    pass


class ContainmentError(PhaseHitError, ValueError):
    pass


class DisjointnessError(PhaseHitError, ValueError):
    pass


class DomainError(PhaseHitError, ValueError):
    """An argument lies outside the domain of the operation (e.g. negative time)."""


class NumericError(PhaseHitError, ArithmeticError):
    pass


class SingularMatrixError(PhaseHitError, ArithmeticError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message if condition is None else f"{message} (condition estimate {condition:.3g})")


class AccuracyError(PhaseHitError, ArithmeticError):
    """Quadrature could not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        self.estimate = estimate
        self.error = error
        super().__init__(message)


class PreconditionError(PhaseHitError, ValueError):
    pass


class ConditioningError(PhaseHitError, ValueError):
    """Conditioning on an event of probability zero."""


class ConsistencyError(PhaseHitError, ValueError):
    pass


class EnumerationSizeError(PhaseHitError, ValueError):
    pass


class ModelFileError(PhaseHitError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ExpressionError(PhaseHitError, ValueError):
    def __init__(self, message, position=None):
        self.position = position
        super().__init__(message if position is None else f"{message} at column {position + 1}")


class DegenerateBoxError(PhaseHitError, ValueError):
    """A histogram box has zero volume."""
