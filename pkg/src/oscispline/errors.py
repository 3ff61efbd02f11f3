"""Exception hierarchy shared by all modules."""


class OscisplineError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(OscisplineError, ValueError):
    """Bad input detected before any computation starts."""


class NonPositive(ValidationError):
    pass


class MissingLimit(ValidationError):
    pass


class DomainMismatch(ValidationError):
    pass


class KnotsOutOfRange(ValidationError):
    pass


class KnotsNotSorted(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class ZerosTooClose(ValidationError):
    pass


class InvalidEnvelope(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class PreconditionViolated(ValidationError):
    pass


class AssumptionsNotVerified(ValidationError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(OscisplineError, ArithmeticError):
    """A computation ran but could not deliver a trustworthy result."""


class NotFinite(NumericalError):
    pass


class Divergent(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Iterative solver gave up.

    ``best`` holds the best iterate found (solver specific) and ``residual``
    its residual, so callers can still report partial results.
    """

    def __init__(self, message, best=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations
