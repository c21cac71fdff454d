"""Exception and warning types shared across the toolkit."""
from __future__ import annotations


class InvalidRegimeError(ValueError):
    """A pump configuration violates the validity conditions of the model."""


class NotAmplifyingError(InvalidRegimeError):
    """An amplification formula was requested for a non-amplifying pump pair."""


class NotSqueezingError(InvalidRegimeError):
    """A squeezing formula was requested for a non-squeezing pump pair."""


class UnstableStepError(ValueError):
    """The trajectory integrator step size exceeds its stability bound."""


class InconsistentCalibrationError(ValueError):
    """Measured variance ratios imply a negative noise beyond tolerance."""


class DegenerateFitError(ValueError):
    """A least-squares fit has no unique solution (degenerate abscissae)."""


class LowSignalError(ValueError):
    """A fitted quantity has too large a relative error to be trusted."""


class ReconstructionError(RuntimeError):
    """The iterative covariance reconstruction failed to converge."""


class TruncationError(ValueError):
    """The Fock-space truncation is insufficient for the requested state."""


class EstimatorFailureError(RuntimeError):
    """Too many bootstrap resamples raised errors inside the estimator."""


class ConfigError(ValueError):
    """A run configuration file failed schema validation.

    ``field`` names the offending entry so command-line diagnostics can
    point at it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class UnphysicalStateWarning(UserWarning):
    """A covariance matrix violates the Heisenberg bound beyond tolerance."""
