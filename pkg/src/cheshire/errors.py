"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration or inconsistent inputs (CLI exit code 2)."""


class MalformedLogError(ValueError):
    """Event log inconsistent with the model (bad user index, unsorted times)."""


class TimeReversalError(ValueError):
    """An intensity was asked to move backwards in time."""


class InvalidBoundError(RuntimeError):
    """A thinning proposal found the intensity above its claimed upper bound."""


class InfeasibleModelError(ValueError):
    """An observed event has zero intensity under the model."""


class SolverDivergenceError(RuntimeError):
    """Non-finite values appeared while integrating the Riccati / g equations."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class CalibrationError(RuntimeError):
    """The budget target cannot be met inside the multiplier bracket."""

    def __init__(self, message, probes=()):
        super().__init__(message)
        self.probes = list(probes)
