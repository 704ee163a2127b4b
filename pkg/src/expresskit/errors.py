"""Exception and warning types shared across the pipeline.

Two broad families exist so the CLI can map failures to exit codes:
:class:`ValidationError` (bad inputs or configuration, exit code 2) and
:class:`NumericalError` (the computation is undefined or failed for the given
data, exit code 3).
"""


class ExpresskitError(Exception):
    """Base class for all library errors."""


class ValidationError(ExpresskitError):
    """Invalid input data, file format, or configuration."""


class NumericalError(ExpresskitError):
    """A statistical quantity is undefined or a solver failed on this data."""


# -- input / format errors ---------------------------------------------------

class MalformedRow(ValidationError):
    """A CSV row has the wrong column count, a bad type, or inconsistent keys."""


class OutOfRangeAnswer(ValidationError):
    """A rating answer falls outside the 0..4 scale."""


class DuplicateRating(ValidationError):
    """The same (clip, rater) pair appears more than once."""


class RecordingTooShort(ValidationError):
    """A recording cannot hold all clip windows for its task without overlap."""


class TooFewValidFrames(ValidationError):
    """A clip slice does not contain enough valid frames for kinematics."""


class TooFewSubjects(ValidationError):
    """Not enough subjects to build train/validation/test splits."""


class InsufficientRaters(ValidationError):
    """A clip does not have the uniform rater count required by an analysis."""


class LengthMismatch(ValidationError):
    """Two paired vectors have different lengths."""


class DimensionMismatch(ValidationError):
    """A matrix does not match the feature dimension of a fitted model."""


class NonFiniteInput(ValidationError):
    """An input array contains NaN or infinity."""


class InvalidConfig(ValidationError):
    """A configuration value is missing, unparsable, or inconsistent."""


# -- numerical / statistical errors ------------------------------------------

class DegenerateData(NumericalError):
    """All target means are equal, so the reliability ratio is undefined."""


class NonPositiveCovariance(NumericalError):
    """The three-indicator factor solution is undefined for this covariance."""


class AllZeroLoadings(NumericalError):
    """Factor scores cannot be computed when every loading is zero."""


class StandardizationDegenerate(NumericalError):
    """A score vector has zero variance and cannot be standardized."""


class ZeroVariance(NumericalError):
    """Correlation is undefined because one input has zero variance."""


class SingleCluster(NumericalError):
    """Cluster resampling needs at least two clusters."""


# -- warnings ----------------------------------------------------------------

class HeywoodWarning(UserWarning):
    """A fitted residual variance was negative and has been clamped to zero."""
