"""Exception types shared across the package."""


class TcmError(Exception):
    """Base class for all library errors."""


class DimensionError(TcmError, ValueError):
    """Tensor extents do not agree with an operation's contract."""


class ConfigurationError(TcmError, ValueError):
    """A configuration value is outside its valid range."""


class EvaluationError(TcmError, ArithmeticError):
    """A function produced a non-finite value."""


class StateError(TcmError, RuntimeError):
    """An operation was requested in an invalid state (e.g. backward without a tape)."""


class LookupFailure(TcmError, KeyError):
    """A named entity (op, parameter) is not registered."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TrainingError(TcmError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
