"""Exception hierarchy shared by all modules."""


class NndaError(Exception):
    """Base class for package errors."""


class ConfigurationError(NndaError, ValueError):
    """Invalid configuration, shape mismatch or unusable input data."""


class IntegrationBlowupError(NndaError, FloatingPointError):
    """Model integration produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state after integration step {step}")


class DegenerateEnsembleError(NndaError, ValueError):
    """Ensemble too small for the requested statistic."""


class NumericalError(NndaError, ArithmeticError):
    """A linear-algebra kernel failed (e.g. eigen-decomposition)."""


class DivergenceError(NndaError, RuntimeError):
    """Filter or training run diverged."""


class StateError(NndaError, RuntimeError):
    """Object used before it reached the required state (e.g. untrained network)."""
