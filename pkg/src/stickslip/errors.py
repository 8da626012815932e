"""Exception types raised across the package."""


class StickSlipError(Exception):
    """Base class for all package errors."""


class AssumptionViolated(StickSlipError, ValueError):
    """PID gains or friction level fail the stability assumption."""


class NonHurwitz(StickSlipError, ArithmeticError):
    """A matrix or polynomial expected to be Hurwitz is not."""


class ZeroWidth(StickSlipError, ValueError):
    pass


class SingularA(StickSlipError, ArithmeticError):
    pass


class NotInStick(StickSlipError, ValueError):
    """The state handed to a stick-phase routine is not in the stick strip."""


class BracketFailure(StickSlipError, RuntimeError):
    """Event localisation could not certify or bracket a zero of v."""


class EventOverflow(StickSlipError, RuntimeError):
    pass


class SelectionOutOfGraph(StickSlipError, ValueError):
    """A friction selection leaves the graph of the inflated sign map."""


class DomainMismatch(StickSlipError, ValueError):
    pass


class GainSynthesisFailed(StickSlipError, ArithmeticError):
    pass


class AuditFailed(StickSlipError, AssertionError):
    """A certificate audit found a violation; ``report`` holds the details."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(StickSlipError, ValueError):
    """An experiment configuration is malformed."""
