"""Semantic exception hierarchy shared by all fabppi modules."""


class FabppiError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FabppiError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class CapabilityError(FabppiError):
    """Requested parameter regime is outside what the implementation certifies."""


class ConvergenceError(FabppiError):
    """An iterative routine exhausted its budget.

    Carries the best estimate reached so far in ``best_estimate`` (may be NaN).
    """

    def __init__(self, message, best_estimate=float("nan")):
        super().__init__(message)
        self.best_estimate = best_estimate


class BracketError(FabppiError, ValueError):
    """A root bracket does not actually bracket a sign change."""


class DegenerateSampleError(FabppiError, ValueError):
    """Sample statistics required by an estimator are degenerate (e.g. zero variance)."""


class SampleSizeError(FabppiError, ValueError):
    """A sample is too small for the requested statistic."""


class ConfigError(FabppiError, ValueError):
    """An experiment configuration or prior specification is inconsistent."""


class RegionError(FabppiError, RuntimeError):
    """Confidence-region construction reached a state that should be impossible."""
