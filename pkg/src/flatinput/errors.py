"""Exception hierarchy shared by all modules."""


class FlatInputError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FlatInputError, ValueError):
    """A state or jet lies outside the admissible domain."""


class NumericsError(FlatInputError, ArithmeticError):
    """A computation produced non-finite values.

    ``last_valid`` holds the last finite state when one is known.
    """

    def __init__(self, message, last_valid=None):
        super().__init__(message)
        self.last_valid = last_valid


class SingularityError(FlatInputError):
    """The observability matrix is singular at the evaluation point."""

    def __init__(self, message, det_q):
        super().__init__(message)
        self.det_q = det_q


class InvalidFactorError(FlatInputError, ValueError):
    """The free factor of the flat input vanished."""


class VerificationFailure(FlatInputError, AssertionError):
    """A flat-input check exceeded its tolerance."""

    def __init__(self, message, point=None, order=None, residual=None):
        super().__init__(message)
        self.point = point
        self.order = order
        self.residual = residual


class GainsError(FlatInputError, ValueError):
    """Controller gains do not give a Hurwitz error polynomial."""


class PfSingularError(FlatInputError):
    """The input coefficient p_f is too close to zero."""

    def __init__(self, message, p_f):
        super().__init__(message)
        self.p_f = p_f


class CompensatorSingularError(FlatInputError):
    """The denominator of the discrete compensator is too close to zero."""

    def __init__(self, message, denominator):
        super().__init__(message)
        self.denominator = denominator


class ConfigError(FlatInputError, ValueError):
    """A scenario file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
