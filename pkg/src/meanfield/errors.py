"""Exception hierarchy shared by every module."""


class MeanFieldError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(MeanFieldError, ValueError):
    """Invalid configuration or argument values."""


class ShapeError(MeanFieldError, ValueError):
    """Array dimensions are inconsistent."""


class DomainError(MeanFieldError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class DegenerateError(MeanFieldError, ArithmeticError):
    """A normalizer or bandwidth vanished."""


class NumericalError(MeanFieldError, ArithmeticError):
    """Base class for numeric failures (CLI exit code 3)."""


class TrainingDivergedError(NumericalError):
    """Loss or gradient became non-finite."""


class BlowUpError(NumericalError):
    """A simulated state left the admissible range."""

    def __init__(self, step, message="state blew up"):
        self.step = step
        super().__init__(f"{message} at step {step}")


class FormatError(MeanFieldError, ValueError):
    """A persisted file is corrupt, truncated, or of an unsupported version."""
