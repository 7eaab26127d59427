"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ShapeError(SimError):
    """Operand dimensions are incompatible."""


class ValidationError(SimError):
    """An input violates a documented invariant."""


class ConfigError(SimError):
    """A configuration value is missing, unknown, or out of range."""


class NumericError(SimError):
    """A numeric routine produced non-finite values or failed to converge."""


class TopologyError(SimError):
    """A communication topology is unusable (empty neighborhood, bad degree)."""


class AlignmentError(ValidationError):
    """Task index maps of two objects cannot be reconciled."""


class DegenerateInputError(SimError):
    """An input is structurally valid but carries no usable signal."""


class TrainingStepError(SimError):
    """A training step cannot make progress (e.g. a fully masked batch)."""


class EvaluationError(SimError):
    """Test-set evaluation is impossible (e.g. single-class labels everywhere)."""


class DivergedError(SimError):
    """Training diverged; carries the round at which it happened."""

    def __init__(self, round_index: int, message: str):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index
