"""Exception types shared across the package."""


class WalklabError(Exception):
    """Base class for package errors."""


class CapacityError(WalklabError):
    """A resource limit (steps, dimension, exact-arithmetic range) was exceeded."""


class ConfigError(WalklabError):
    """Invalid experiment configuration; message names the violated precondition."""


class CoverageError(WalklabError):
    """A subdivision does not cover the required value range."""


class SubdivisionError(WalklabError):
    """A subdivision could not be constructed (empty or non-monotone ladder)."""


class SandwichViolation(WalklabError):
    """The strand-decomposition sandwich inequality failed on a path.

    This must never happen; it indicates an implementation bug.  The
    attached report and label identify the offending path.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PathwiseInvariantError(WalklabError):
    """A pathwise invariant (mass, Holder bound, level-set bound) failed."""


class DegenerateSampleError(WalklabError):
    """A statistical test received a degenerate (zero-variance) sample."""


class InfeasibleConfigError(WalklabError):
    """Rejection sampling was asked for an event too rare to sample."""

    def __init__(self, message, pre_estimate=None):
        super().__init__(message)
        self.pre_estimate = pre_estimate
