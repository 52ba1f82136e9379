"""Shared exception types."""


class DimensionMismatch(ValueError):
    """Operands live in different dimensions."""


class MembershipViolation(ValueError):
    """A point that must belong to a convex set does not."""


class NonConvergence(RuntimeError):
    """An iterative routine exhausted its iteration budget before its stop rule."""

    def __init__(self, message, last_gap=None):
        super().__init__(message)
        self.last_gap = last_gap


class StepSizeUnderflow(RuntimeError):
    """Adaptive stepping drove the step size below the resolvable floor.

    The partial trajectory computed so far is attached as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or validated."""
