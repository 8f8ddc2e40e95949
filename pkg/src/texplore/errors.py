"""Exception types shared across the package."""


class TexploreError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(TexploreError, ValueError):
    """A physical or configuration parameter is outside its valid range."""


class DimensionError(TexploreError, ValueError):
    """Array arguments have inconsistent shapes."""


class SingularRegressorError(TexploreError):
    """The regressor Gram matrix is numerically rank deficient.

    Carries the smallest singular value of the regressor matrix so callers
    can report how close to singular the data were.
    """

    def __init__(self, message: str, smallest_singular_value: float):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class FalsifiedPriorError(TexploreError):
    """Observed data are inconsistent with the configured disturbance energy bound.

    Raised when the residual energy of the least-squares fit exceeds the
    assumed disturbance energy budget, which makes the non-falsified set
    empty.  Almost always a sign of a misconfigured energy bound.
    """


class PriorTooLargeError(TexploreError):
    """Too many sampled prior models are unstable.

    The scenario sampler rejects Schur-unstable samples; if most samples are
    rejected the prior set itself violates the stability assumption and the
    returned caps would be meaningless.
    """


class OffGridFrequencyError(TexploreError, ValueError):
    """A frequency does not lie on the integer-multiples-of-1/T grid."""


class InfeasibleDesignError(TexploreError):
    """The exploration SDP is infeasible for the given uncertainty bounds.

    This is an expected, actionable outcome when the prior uncertainty is
    too large: `failing_lmi` names the constraint block that cannot be
    satisfied (determined by a slack diagnosis solve).
    """

    def __init__(self, message: str, failing_lmi: str | None = None):
        super().__init__(message)
        self.failing_lmi = failing_lmi


class SolverFailureError(TexploreError):
    """The conic solver terminated abnormally."""


class ConstructionError(TexploreError):
    """An internal assembly produced an unbounded or malformed problem."""


class StageError(TexploreError):
    """Wraps a pipeline stage failure with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
