"""Exception types shared across the package."""


class PnskLabError(Exception):
    """Base class for all package errors."""


class ValidationError(PnskLabError, ValueError):
    """Invalid configuration, parameters, or field data."""


class DomainError(PnskLabError, ValueError):
    """Evaluation outside the mathematical domain (e.g. negative density)."""


class UnsupportedLawError(PnskLabError, ValueError):
    """Pressure law outside the supported structural class."""


class QuadratureError(PnskLabError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CourantError(PnskLabError, RuntimeError):
    """Time step violates the explicit transport stability bound."""


class BlowUpError(PnskLabError, RuntimeError):
    """Non-finite field detected during time stepping.

    Carries the last finite snapshot so the caller can dump diagnostics.
    """

    def __init__(self, message, t=None, snapshot=None):
        super().__init__(message)
        self.t = t
        self.snapshot = snapshot
