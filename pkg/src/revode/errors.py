"""Exception types shared across the package.

Each class maps onto one CLI exit code so that failures surface with a
stable, scriptable status (see cli.EXIT_CODES).
"""


class RevodeError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(RevodeError):
    """Bad user input: unknown fields, out-of-range values, impossible grids."""


class IntegrationError(RevodeError):
    """Numerical integration produced a non-finite state or hit a singularity."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class UnsupportedSystemError(RevodeError):
    """Operation is not defined for the given system kind."""


class ShapeError(RevodeError):
    """Autodiff primitive called with incompatible operand shapes."""


class EncodingError(RevodeError):
    """Encoder cannot produce a latent state (e.g. an agent has no observations)."""


class RolloutDivergedError(RevodeError):
    """Latent ODE rollout left the finite range."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NonFiniteGradientError(RevodeError):
    """Backward pass produced NaN or Inf gradients."""


class TrainingDivergedError(RevodeError):
    """Optimization produced a non-finite loss or gradient and cannot continue."""


class DatasetFormatError(RevodeError):
    """Dataset file violates the JSONL schema."""


class ArtifactMismatchError(RevodeError):
    """Stored artifact (checkpoint, dataset) is inconsistent with expectations."""
