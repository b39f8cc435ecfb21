"""Exception hierarchy for the rsstitch toolkit."""


class RsStitchError(Exception):
    """Base class for all toolkit errors."""


class ParameterDomainError(RsStitchError, ValueError):
    """A model parameter lies outside its mathematical domain (e.g. k <= -2)."""


class DegenerateConfigurationError(RsStitchError, ValueError):
    """Input point configuration admits no well-posed normalization or fit."""


class DegenerateSampleError(RsStitchError, ValueError):
    """A solver sample is rank-deficient beyond the expected gauge null space."""


class UnobservableAccelerationError(RsStitchError, ValueError):
    """gamma = 0 removes all acceleration dependence; the 5-point solve is ill-posed."""


class NoSolutionError(RsStitchError, ValueError):
    """No admissible real root of the solver polynomial inside the search range."""


class EstimationFailureError(RsStitchError, RuntimeError):
    """No RANSAC trial produced an admissible model."""


class UndefinedMetricError(RsStitchError, ValueError):
    """A quality metric is undefined for the given inputs (e.g. empty overlap)."""


class PointNotObservedError(RsStitchError, ValueError):
    """A 3D point has no valid scanline projection inside the image."""


class CorrespondenceFileError(RsStitchError, ValueError):
    """A correspondence file failed to parse or violated its declared header."""
