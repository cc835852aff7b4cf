"""Exception hierarchy."""


class EtcschedError(Exception):
    """Base class for all package errors."""


class ValidationError(EtcschedError):
    pass


class CompositionError(EtcschedError):
    pass


class StepError(EtcschedError):
    """A delay or discrete transition is not executable."""


class SynthesisError(EtcschedError):
    """The initial state is losing, or the fixpoint failed to stabilize."""


class AbstractionError(EtcschedError):
    """Observed plant behavior left the abstraction's timing envelope."""


class ConfigError(EtcschedError):
    pass


class SimulationError(EtcschedError):
    """Co-simulation aborted; carries the partial trace when available."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
