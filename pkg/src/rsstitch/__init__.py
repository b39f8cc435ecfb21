"""Rolling-shutter-aware homography estimation, warping, and stitching.

Subpackages by concern:
  core      scanline timing model, flows, normalization, shared types
  solvers   minimal and least-squares homography solvers (GS and RS)
  robust    RANSAC wrapper with pluggable residuals
  warpfield spatially-varying (APAP-style) homography fields
  render    forward/inverse warps, rectification, canvas compositing
  synth     synthetic scene generation and procedural rendering
  bench     parameter sweeps, CDF evaluation, stitching quality metric
  cli       command-line frontend (`rsstitch`)
"""

from .core import (
    Correspondence,
    CorrSet,
    MotionSpec,
    Plane,
    RsDiffModel,
    RsParams,
    beta,
    beta1,
    beta2,
    flow_gs,
    flow_rs,
)
from .errors import (
    CorrespondenceFileError,
    DegenerateConfigurationError,
    DegenerateSampleError,
    EstimationFailureError,
    NoSolutionError,
    ParameterDomainError,
    PointNotObservedError,
    RsStitchError,
    UndefinedMetricError,
    UnobservableAccelerationError,
)

__version__ = "0.1.0"

__all__ = [
    "Correspondence",
    "CorrSet",
    "MotionSpec",
    "Plane",
    "RsDiffModel",
    "RsParams",
    "beta",
    "beta1",
    "beta2",
    "flow_gs",
    "flow_rs",
    "RsStitchError",
    "ParameterDomainError",
    "DegenerateConfigurationError",
    "DegenerateSampleError",
    "UnobservableAccelerationError",
    "NoSolutionError",
    "EstimationFailureError",
    "UndefinedMetricError",
    "PointNotObservedError",
    "CorrespondenceFileError",
    "__version__",
]
