"""Exception hierarchy shared by every module.

The CLI maps the three top-level families onto exit codes:
``SpecError`` -> 2, ``NumericalError`` -> 3, ``CertificationError`` -> 4.
"""


class TorusFlowError(Exception):
    """Base class for all package errors."""


class SpecError(TorusFlowError, ValueError):
    """A field-spec document or configuration is malformed."""


class CertificationError(TorusFlowError):
    """An invariant gate rejected the input (positivity, compatibility, ...)."""


class NumericalError(TorusFlowError):
    """A numerical procedure failed to deliver its contract."""


class StepUnderflowError(NumericalError):
    """The adaptive step size fell below the floor.

    ``time`` and ``location`` record where the integrator stalled.
    """

    def __init__(self, message, time=None, location=None):
        super().__init__(message)
        self.time = time
        self.location = location


class HorizonError(NumericalError):
    """Requested horizon exceeds the configured hard cap."""


class ZeroDivisorError(NumericalError):
    """A Fourier mode is orthogonal to the direction vector."""

    def __init__(self, mode):
        super().__init__(f"zero small divisor: xi . n = 0 for mode n={tuple(mode)}")
        self.mode = tuple(mode)


class PrecisionError(NumericalError):
    """High-precision arithmetic ran out of certified digits."""
