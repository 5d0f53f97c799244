"""Exception hierarchy.

User/data problems derive from :class:`InputError` (CLI exit code 1);
numerical breakdowns derive from :class:`NumericalError` (exit code 2).
"""


class RidgeRerandError(Exception):
    """Base class for all package errors."""


class InputError(RidgeRerandError, ValueError):
    """Invalid user input: malformed files, out-of-range parameters."""


class SingularCovarianceError(InputError):
    """Sigma is numerically singular and the criterion needs its inverse."""


class NumericalError(RidgeRerandError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class QuadratureError(NumericalError):
    def __init__(self, message, abserr=None):
        super().__init__(message)
        self.abserr = abserr


class CalibrationError(NumericalError):
    """Monte Carlo calibration could not be carried out (no accepted draws, loop cap)."""


class AcceptanceError(NumericalError):
    """Rerandomization exhausted its draw budget without an acceptable assignment."""

    def __init__(self, message, draws=None, min_value=None):
        super().__init__(message)
        self.draws = draws
        self.min_value = min_value
