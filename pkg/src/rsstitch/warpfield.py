"""Spatially-varying homography fields (APAP style), GS and RS variants.

A field is a grid of per-cell models over the frame-1 extent. Each cell
center solves a Gaussian-weighted least-squares problem over all inlier
correspondences; queries use the nearest cell (documented: pixel-granular
weighting is approximated at grid granularity for tractability).

Normalization uses one global similarity for every cell so all cell models
live in a single coordinate frame and can compose onto one canvas. The RS
acceleration k is shared across cells; it is a pure motion parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import RsParams, as_corrset, beta, flow_coeff_rows, hartley_normalize
from .errors import DegenerateSampleError

__all__ = ["WeightParams", "WarpField", "weight", "build_apap_field"]


@dataclass(frozen=True)
class WeightParams:
    """Gaussian weighting parameters: scale sigma (px), floor tau, grid cell (px)."""

    sigma: float
    tau: float = 0.0025
    cell: float = 40.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must be in (0, 1]")
        if not self.cell >= 1.0:
            raise ValueError("cell edge must be >= 1 px")

    @classmethod
    def for_extent(cls, extent, tau: float = 0.0025, cell: float = 40.0) -> "WeightParams":
        """Default sigma = 0.1 x image diagonal."""
        w, h = extent
        return cls(sigma=0.1 * float(np.hypot(w, h)), tau=tau, cell=cell)


def weight(x, xi, wp: WeightParams):
    """max(exp(-||x - xi||^2 / sigma^2), tau); x (2,), xi (..., 2)."""
    d2 = np.sum((np.asarray(xi, float) - np.asarray(x, float)) ** 2, axis=-1)
    return np.maximum(np.exp(-d2 / wp.sigma**2), wp.tau)


@dataclass
class WarpField:
    """Grid of per-cell 3x3 models.

    kind 'gs': discrete homographies. kind 'rs': differential homographies
    sharing one acceleration k and RsParams.
    """

    kind: str
    cells: np.ndarray  # (ny, nx, 3, 3)
    cell_size: float
    extent: tuple[float, float]
    rs: RsParams | None = None
    k: float = 0.0
    provenance: dict = field(default_factory=dict)

    @property
    def ny(self) -> int:
        return self.cells.shape[0]

    @property
    def nx(self) -> int:
        return self.cells.shape[1]

    def cell_index(self, pts):
        """Nearest-cell (iy, ix) for (..., 2) points, clipped to the grid.
        Non-finite points index cell (0, 0); callers mask them separately."""
        pts = np.asarray(pts, dtype=float)
        pts = np.where(np.isfinite(pts), pts, 0.0)
        ix = np.clip((pts[..., 0] // self.cell_size).astype(int), 0, self.nx - 1)
        iy = np.clip((pts[..., 1] // self.cell_size).astype(int), 0, self.ny - 1)
        return iy, ix

    def models_at(self, pts) -> np.ndarray:
        """Per-point 3x3 model array selected by nearest cell."""
        iy, ix = self.cell_index(pts)
        return self.cells[iy, ix]

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "cell": self.cell_size,
            "nx": self.nx,
            "ny": self.ny,
            "extent": list(self.extent),
            "k": self.k,
            "gamma": self.rs.gamma if self.rs else 0.0,
            "h": self.rs.h if self.rs else self.extent[1],
            "cells": [
                [float(v) for v in self.cells[iy, ix].reshape(9)]
                for iy in range(self.ny)
                for ix in range(self.nx)
            ],
            "provenance": self.provenance,
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WarpField":
        d = json.loads(text)
        cells = np.array(d["cells"], dtype=float).reshape(d["ny"], d["nx"], 3, 3)
        rs = None
        if d["kind"] == "rs":
            rs = RsParams(gamma=d["gamma"], h=d["h"])
        return cls(
            kind=d["kind"],
            cells=cells,
            cell_size=d["cell"],
            extent=tuple(d["extent"]),
            rs=rs,
            k=d["k"],
            provenance=d.get("provenance", {}),
        )


def _weighted_dlt(p1n, p2n, w):
    """Weighted total-least-squares DLT on pre-normalized points."""
    x1, y1 = p1n[:, 0], p1n[:, 1]
    x2, y2 = p2n[:, 0], p2n[:, 1]
    z = np.zeros_like(x1)
    o = np.ones_like(x1)
    r1 = np.stack([x1, y1, o, z, z, z, -x2 * x1, -x2 * y1, -x2], axis=-1)
    r2 = np.stack([z, z, z, x1, y1, o, -y2 * x1, -y2 * y1, -y2], axis=-1)
    A = np.concatenate([w[:, None] * r1, w[:, None] * r2], axis=0)
    _, S, Vt = np.linalg.svd(A, full_matrices=True)
    if S[7] <= 1e-10 * S[0]:
        raise DegenerateSampleError("weighted DLT rank-deficient")
    return Vt[-1].reshape(3, 3)


def _weighted_rs_normalized(bn, un, betas, w):
    """Weighted differential LS in normalized coordinates; min-norm gauge."""
    B = (w[:, None, None] * betas[:, None, None] * bn).reshape(-1, 9)
    rhs = (w[:, None] * un).reshape(-1)
    Ub, S, Vt = np.linalg.svd(B, full_matrices=False)
    if S[7] <= 1e-10 * S[0]:
        raise DegenerateSampleError("weighted differential system rank < 8")
    tol = S[0] * 1e-10
    Sinv = np.where(S > tol, 1.0 / np.where(S > tol, S, 1.0), 0.0)
    return (Vt.T @ (Sinv * (Ub.T @ rhs))).reshape(3, 3)


def build_apap_field(
    inliers,
    mode: str,
    wp: WeightParams,
    extent,
    rs: RsParams | None = None,
    k: float = 0.0,
) -> WarpField:
    """Solve the weighted problem at every grid cell center.

    mode 'gs': weighted discrete DLT per cell. mode 'rs': weighted
    differential fit at fixed k per cell. mode 'gs-diff': differential fit
    with unit time fractions (the gamma=0 limit of 'rs'). A cell whose
    weighted system is degenerate falls back to the global (uniform-weight)
    model; such cells are recorded in provenance["fallback_cells"].
    """
    if mode not in ("gs", "rs", "gs-diff"):
        raise ValueError("mode must be 'gs', 'rs', or 'gs-diff'")
    if mode == "rs" and rs is None:
        raise ValueError("rs mode needs RsParams")
    cs = as_corrset(inliers)
    n = len(cs)
    if n < (4 if mode == "gs" else 5):
        raise DegenerateSampleError("too few inliers for a field")
    w_ext, h_ext = float(extent[0]), float(extent[1])
    nx = max(1, int(np.ceil(w_ext / wp.cell)))
    ny = max(1, int(np.ceil(h_ext / wp.cell)))

    # one global normalization shared by all cells
    T, p1n, un, s = hartley_normalize(cs.p1, cs.u)
    Ti = np.linalg.inv(T)
    p2n = p1n + un
    if mode != "gs":
        bn = flow_coeff_rows(p1n)
        if mode == "rs":
            y1 = cs.p1[:, 1]
            y2 = y1 + cs.u[:, 1]
            betas = np.asarray(beta(k, y1, y2, rs))
        else:
            betas = np.ones(n)

    ones = np.ones(n)
    if mode == "gs":
        global_n = _weighted_dlt(p1n, p2n, ones)
    else:
        global_n = _weighted_rs_normalized(bn, un, betas, ones)

    cells = np.empty((ny, nx, 3, 3))
    fallback = []
    for iy in range(ny):
        cy = (iy + 0.5) * wp.cell
        for ix in range(nx):
            cx = (ix + 0.5) * wp.cell
            wv = weight((cx, cy), cs.p1, wp)
            try:
                if mode == "gs":
                    hn = _weighted_dlt(p1n, p2n, wv)
                else:
                    hn = _weighted_rs_normalized(bn, un, betas, wv)
            except DegenerateSampleError:
                hn = global_n
                fallback.append([iy, ix])
            cells[iy, ix] = Ti @ hn @ T

    return WarpField(
        kind=mode,
        cells=cells,
        cell_size=wp.cell,
        extent=(w_ext, h_ext),
        rs=rs if mode == "rs" else None,
        k=k if mode == "rs" else 0.0,
        provenance={
            "n_inliers": n,
            "sigma": wp.sigma,
            "tau": wp.tau,
            "fallback_cells": fallback,
        },
    )
