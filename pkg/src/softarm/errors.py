class SoftArmError(Exception):
    """Base class for all errors raised by softarm."""


class InvalidInputError(SoftArmError, ValueError):
    pass


class SingularConfigurationError(SoftArmError, RuntimeError):
    """The inertia matrix is too ill-conditioned to invert."""

    def __init__(self, message, condition_number=None, time=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.time = time


class RankDeficientError(SoftArmError, RuntimeError):
    """Least-squares system does not determine every unknown coefficient."""

    def __init__(self, message, unidentifiable=()):
        super().__init__(message)
        self.unidentifiable = list(unidentifiable)


class ControllerFaultError(SoftArmError, RuntimeError):
    def __init__(self, message, stage):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class SimulationFaultError(SoftArmError, RuntimeError):
    def __init__(self, message, time=None, diagnostics=None):
        super().__init__(message)
        self.time = time
        self.diagnostics = diagnostics or {}
