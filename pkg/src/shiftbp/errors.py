"""Exception types shared across the package."""


class ShiftBPError(Exception):
    """Base class for all package errors."""


class ParseError(ShiftBPError):
    """A law document could not be parsed."""


class ValidationError(ShiftBPError):
    """An input parsed but violates a structural requirement."""


class BracketError(ShiftBPError):
    """A scalar equation failed its bracketing sign conditions."""


class NoRootInRegime(ShiftBPError):
    """The decay-rate equation has no root in (0, 1) for this law."""


class RegimeError(ShiftBPError):
    """The law is not supercritical, so the requested construction is undefined."""


class QuadratureError(ShiftBPError):
    """Adaptive quadrature could not reach the requested tolerance."""


class NotFound(ShiftBPError):
    """A bounded scan finished without meeting its stopping condition."""


class NoConvergence(ShiftBPError):
    """Fixed-point construction did not converge.

    The best-effort candidate is attached so callers can still inspect or
    export it.
    """

    def __init__(self, message, candidate=None):
        super().__init__(message)
        self.candidate = candidate
