"""Geometric primitives shared by every other module.

Conventions used throughout the toolkit:

* Pixels are (x, y) pairs; y equals the scanline index, with y = 0 the first
  (top) scanline and the origin at the top-left pixel center.
* A differential homography H is a plain 3x3 ndarray. It generates a flow
  field and is therefore only defined up to an additive eps*I (adding any
  multiple of the identity leaves every flow unchanged).
* vec(H) is ROW-MAJOR: h = H.reshape(9). Coefficient rows and all solvers
  agree on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfigurationError, ParameterDomainError

__all__ = [
    "RsParams",
    "Correspondence",
    "CorrSet",
    "RsDiffModel",
    "MotionSpec",
    "Plane",
    "beta1",
    "beta2",
    "beta",
    "flow_gs",
    "flow_rs",
    "flow_coeff_rows",
    "hartley_normalize",
    "denormalize_h",
]


@dataclass(frozen=True)
class RsParams:
    """Rolling-shutter timing: readout ratio and scanline count.

    gamma: fraction of the inter-frame period spent reading scanlines,
           0 (global shutter) .. 1 (readout spans the whole interval).
    h:     total number of scanlines in the image.
    """

    gamma: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ParameterDomainError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (self.h >= 2):
            raise ParameterDomainError(f"scanline count must be >= 2, got {self.h}")


@dataclass(frozen=True)
class Correspondence:
    """A frame-1 pixel and its measured flow to frame 2."""

    p1: tuple[float, float]
    u: tuple[float, float]

    @property
    def p2(self) -> tuple[float, float]:
        return (self.p1[0] + self.u[0], self.p1[1] + self.u[1])


class CorrSet:
    """Array-backed correspondence collection: p1 (N,2) and flows u (N,2)."""

    def __init__(self, p1, u, flow_cap: float | None = None):
        p1 = np.asarray(p1, dtype=float)
        u = np.asarray(u, dtype=float)
        if p1.ndim != 2 or p1.shape[1] != 2 or p1.shape != u.shape:
            raise ValueError("p1 and u must both have shape (N, 2)")
        if not (np.isfinite(p1).all() and np.isfinite(u).all()):
            raise ValueError("correspondences must be finite")
        if flow_cap is not None:
            mags = np.linalg.norm(u, axis=1)
            if (mags > flow_cap).any():
                bad = int(np.argmax(mags > flow_cap))
                raise ValueError(
                    f"flow magnitude {mags[bad]:.1f} px at row {bad} exceeds "
                    f"the sanity cap {flow_cap:.1f} px"
                )
        self.p1 = p1
        self.u = u

    @property
    def p2(self):
        return self.p1 + self.u

    def __len__(self):
        return len(self.p1)

    def subset(self, idx) -> "CorrSet":
        return CorrSet(self.p1[idx], self.u[idx])

    @classmethod
    def from_pairs(cls, pairs) -> "CorrSet":
        p1 = np.array([c.p1 for c in pairs], dtype=float)
        u = np.array([c.u for c in pairs], dtype=float)
        return cls(p1, u)


def as_corrset(corrs) -> CorrSet:
    if isinstance(corrs, CorrSet):
        return corrs
    return CorrSet.from_pairs(list(corrs))


@dataclass(frozen=True)
class RsDiffModel:
    """Differential homography plus the acceleration parameter.

    The stored H is one representative of the eps*I family. Flow predictions
    are invariant to the representative choice.
    """

    h_mat: np.ndarray
    k: float
    rs: RsParams

    def __post_init__(self):
        m = np.asarray(self.h_mat, dtype=float)
        if m.shape != (3, 3) or not np.isfinite(m).all():
            raise ValueError("h_mat must be a finite 3x3 matrix")
        object.__setattr__(self, "h_mat", m)
        _check_k(self.k)


@dataclass(frozen=True)
class MotionSpec:
    """Inter-frame camera motion: rotational/translational velocity and acceleration.

    omega is in radians per inter-frame unit time; ||v|| is the ratio of
    translation magnitude to average scene depth. The acceleration k scales
    the shared motion direction, so a single scalar suffices.
    """

    omega: np.ndarray
    v: np.ndarray
    k: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        _check_k(self.k)


@dataclass(frozen=True)
class Plane:
    """Scene plane (n, d): unit normal and positive camera-to-plane distance."""

    n: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float).reshape(3)
        nn = np.linalg.norm(n)
        if not np.isclose(nn, 1.0, atol=1e-9):
            raise ValueError("plane normal must be unit length")
        if not self.d > 0:
            raise ValueError("plane distance must be positive")
        object.__setattr__(self, "n", n)


def _check_k(k) -> None:
    k = np.asarray(k)
    if not np.isfinite(k).all() or (k <= -2.0).any():
        raise ParameterDomainError(f"acceleration parameter must satisfy k > -2, got {k}")


def beta1(k: float, y1, rs: RsParams):
    """Pose-interpolation coefficient of a frame-1 scanline.

    beta1 = (t + k/2 * t^2) * 2/(2+k) with t = gamma*y1/h. Scanline 0 is the
    reference pose: beta1(k, 0) = 0 for every admissible k.
    """
    _check_k(k)
    t = rs.gamma * np.asarray(y1, dtype=float) / rs.h
    return (t + 0.5 * k * t * t) * (2.0 / (2.0 + k))


def beta2(k: float, y2, rs: RsParams):
    """Pose-interpolation coefficient of a frame-2 scanline.

    beta2 = (t + k/2 * t^2) * 2/(2+k) with t = 1 + gamma*y2/h, so
    beta2(k, 0) = 1 identically.
    """
    _check_k(k)
    t = 1.0 + rs.gamma * np.asarray(y2, dtype=float) / rs.h
    return (t + 0.5 * k * t * t) * (2.0 / (2.0 + k))


def beta(k: float, y1, y2, rs: RsParams):
    """Relative interpolation between scanline y1 of frame 1 and y2 of frame 2."""
    return beta2(k, y2, rs) - beta1(k, y1, rs)


def flow_gs(h_mat, p):
    """Instantaneous (global-shutter) flow of the differential homography.

    p may be a single (2,) pixel or an (..., 2) array. Returns flows with the
    same leading shape. Invariant under h_mat -> h_mat + eps*I.
    """
    m = np.asarray(h_mat, dtype=float)
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    w1 = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    w2 = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    w3 = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    return np.stack([w1 - x * w3, w2 - y * w3], axis=-1)


def flow_rs(model: RsDiffModel, p1, y2):
    """Scanline-aware flow: beta(k, y1, y2) * flow_gs(H, p1)."""
    p1 = np.asarray(p1, dtype=float)
    b = beta(model.k, p1[..., 1], y2, model.rs)
    return np.asarray(b)[..., None] * flow_gs(model.h_mat, p1)


def flow_coeff_rows(p):
    """Coefficient rows b with b @ vec(H) = flow_gs(H, p), vec row-major.

    p: (..., 2) -> (..., 2, 9). b @ vec(I) = 0 for every pixel, which is the
    eps*I gauge direction every differential linear system inherits.
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    z = np.zeros_like(x)
    o = np.ones_like(x)
    r1 = np.stack([x, y, o, z, z, z, -x * x, -x * y, -x], axis=-1)
    r2 = np.stack([z, z, z, x, y, o, -x * y, -y * y, -y], axis=-1)
    return np.stack([r1, r2], axis=-2)


def hartley_normalize(p1, u=None):
    """Similarity-normalize points (zero centroid, mean distance sqrt(2)).

    Returns (T, p1n, un, s): the 3x3 similarity, normalized points, flows
    scaled by the same factor s (flows are translation invariant), and s.
    Use denormalize_h to map a normalized-frame differential H back; the
    conjugation T^-1 H' T preserves the eps*I ambiguity.
    """
    p1 = np.asarray(p1, dtype=float)
    if len(p1) < 2:
        raise DegenerateConfigurationError("need at least 2 points to normalize")
    c = p1.mean(axis=0)
    mean_dist = np.linalg.norm(p1 - c, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfigurationError("all points coincident")
    s = np.sqrt(2.0) / mean_dist
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    p1n = (p1 - c) * s
    un = None if u is None else np.asarray(u, dtype=float) * s
    return T, p1n, un, s


def denormalize_h(h_norm, T):
    """Undo hartley_normalize on a differential homography: H = T^-1 H' T."""
    Ti = np.linalg.inv(T)
    return Ti @ np.asarray(h_norm, dtype=float) @ T
