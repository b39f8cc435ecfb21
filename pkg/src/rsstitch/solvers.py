"""Minimal and least-squares solvers for GS and RS differential homographies.

All solvers Hartley-normalize internally with a single similarity T built
from the frame-1 points and undo it by conjugation H = T^-1 H' T. Scanline
values entering the beta functions are always raw pixel coordinates.

The RS constant-acceleration solver eliminates the unknown homography with
a determinant polynomial in k. Two facts shape its construction:

* The stacked flow-coefficient block has vec(I) in its null space at every
  k (the eps*I gauge), so a naive square stack [beta*b | -u] is singular
  identically and its determinant carries no information. A trace gauge row
  [1,0,0,0,1,0,0,0,1 | 0] removes that direction.
* Scaling both rows of one point by beta(k) plants spurious determinant
  roots wherever any single point's beta vanishes. Splitting each point
  into a k-free direction constraint (u_y*b_x - u_x*b_y)h = 0, where beta
  cancels exactly, plus one k-carrying magnitude equation removes those
  factors and collapses the determinant to degree <= 3.

With 5 direction rows, 4 magnitude rows (one point, chosen as the one with
the weakest flow, contributes no magnitude row) and the gauge row, the
10x10 system is square, affine in k, and its determinant vanishes exactly
at the true k of noise-free data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .core import (
    CorrSet,
    RsDiffModel,
    RsParams,
    as_corrset,
    beta,
    denormalize_h,
    flow_coeff_rows,
    hartley_normalize,
)
from .errors import (
    DegenerateSampleError,
    NoSolutionError,
    UnobservableAccelerationError,
)

__all__ = [
    "SolverOutput",
    "solve_gs_discrete",
    "solve_gs_diff",
    "solve_rs_constvel",
    "solve_rs_constacc_5pt",
    "solve_rs_weighted",
    "DEFAULT_K_RANGE",
]

DEFAULT_K_RANGE = (-1.9, 10.0)

_GAUGE_ROW = np.array([1, 0, 0, 0, 1, 0, 0, 0, 1, 0], dtype=float)


@dataclass
class SolverOutput:
    """Candidate models plus solve diagnostics.

    models are sorted by full-sample residual (best first). diagnostics keys:
    poly_degree, root_count, full_residuals, defining_residuals,
    scanline_spread, sv_smallest.
    """

    models: list
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# batched building blocks (shared with the RANSAC engine)
# ---------------------------------------------------------------------------


def hartley_batch(P):
    """Vectorized single-transform normalization for (T, m, 2) point stacks."""
    c = P.mean(axis=1)
    d = np.linalg.norm(P - c[:, None, :], axis=2).mean(axis=1)
    ok = d > 1e-12
    s = np.where(ok, np.sqrt(2.0) / np.where(ok, d, 1.0), 1.0)
    Pn = (P - c[:, None, :]) * s[:, None, None]
    T = np.zeros((len(P), 3, 3))
    Ti = np.zeros_like(T)
    T[:, 0, 0] = T[:, 1, 1] = s
    T[:, 2, 2] = 1.0
    T[:, 0, 2] = -s * c[:, 0]
    T[:, 1, 2] = -s * c[:, 1]
    Ti[:, 0, 0] = Ti[:, 1, 1] = 1.0 / s
    Ti[:, 2, 2] = 1.0
    Ti[:, 0, 2] = c[:, 0]
    Ti[:, 1, 2] = c[:, 1]
    return T, Ti, Pn, s, ok


def dlt_batch(P1, P2):
    """Batched discrete DLT: (T, m, 2) x2 -> (T, 3, 3) H and validity mask.

    Total least squares via SVD; for m = 4 this is the exact minimal solve.
    A sample is invalid when its design matrix is rank-deficient beyond the
    expected one-dimensional null space, or the recovered H is singular.
    """
    Tt, m, _ = P1.shape
    T, Ti, P1n, s, ok = hartley_batch(P1)
    P2n = (P2 - P1.mean(axis=1)[:, None, :]) * s[:, None, None]
    x1, y1 = P1n[..., 0], P1n[..., 1]
    x2, y2 = P2n[..., 0], P2n[..., 1]
    z = np.zeros_like(x1)
    o = np.ones_like(x1)
    r1 = np.stack([x1, y1, o, z, z, z, -x2 * x1, -x2 * y1, -x2], axis=-1)
    r2 = np.stack([z, z, z, x1, y1, o, -y2 * x1, -y2 * y1, -y2], axis=-1)
    A = np.concatenate([r1, r2], axis=1)  # (T, 2m, 9)
    # full_matrices so the last right-singular vector spans the null space
    _, S, Vt = np.linalg.svd(A, full_matrices=True)
    hn = Vt[:, -1, :]
    Hn = hn.reshape(-1, 3, 3)
    H = Ti @ Hn @ T
    rank_ok = S[:, 7] > 1e-9 * np.maximum(S[:, 0], 1e-300)
    nonsing = np.abs(np.linalg.det(H)) > 1e-14
    return H, ok & rank_ok & nonsing


def diff_lstsq_batch(P1, U, betas):
    """Batched differential LS fit: rows beta_i * b_i, rhs u_i (normalized).

    betas: (T, m) known per-point scale factors. Returns (T,3,3) H in raw
    pixel coordinates plus a validity mask (rank 8 required; the gauge
    direction is fixed by the minimum-norm pseudo-inverse solution).
    """
    Tt, m, _ = P1.shape
    T, Ti, P1n, s, ok = hartley_batch(P1)
    Un = U * s[:, None, None]
    b = flow_coeff_rows(P1n)  # (T, m, 2, 9)
    B = (betas[..., None, None] * b).reshape(Tt, 2 * m, 9)
    rhs = Un.reshape(Tt, 2 * m)
    Ub, S, Vt = np.linalg.svd(B, full_matrices=False)
    # rank-8 pseudo-inverse (the 9th singular value is the gauge direction)
    tol = np.maximum(S[:, :1] * 1e-10, 1e-300)
    Sinv = np.where(S > tol, 1.0 / np.where(S > tol, S, 1.0), 0.0)
    proj = Sinv * np.einsum("tjk,tj->tk", Ub, rhs)
    hn = np.einsum("tkj,tk->tj", Vt, proj)
    Hn = hn.reshape(-1, 3, 3)
    H = Ti @ Hn @ T
    rank_ok = S[:, 7] > 1e-10 * np.maximum(S[:, 0], 1e-300)
    return H, ok & rank_ok


def rs5_batch(P, U, rs: RsParams, k_range=DEFAULT_K_RANGE):
    """Batched RS constant-acceleration 5-point solve.

    P, U: (T, 5, 2) raw pixel samples. Returns (trial_idx, H, k, full_res,
    def_res, degrees, root_counts) flat over candidates; degrees/root_counts
    are per-trial arrays.
    """
    if rs.gamma == 0.0:
        raise UnobservableAccelerationError(
            "gamma = 0 leaves the acceleration unobservable; use a GS solver"
        )
    Tt = len(P)
    lo, hi = float(k_range[0]), float(k_range[1])
    if not (-2.0 < lo < hi):
        raise ValueError(f"k_range must satisfy -2 < lo < hi, got {k_range}")
    g = rs.gamma / rs.h
    T, Ti, Pn, s, okn = hartley_batch(P)
    Un = U * s[:, None, None]
    y1 = P[..., 1]
    y2 = P[..., 1] + U[..., 1]  # observed frame-2 scanline
    # beta * (2+k)/2 = a + c*k, affine in k, from raw scanlines
    a_i = 1.0 + g * (y2 - y1)
    c_i = 0.5 * ((1.0 + g * y2) ** 2 - (g * y1) ** 2)
    b = flow_coeff_rows(Pn)  # (T, 5, 2, 9)

    # k-free direction rows: beta cancels between the two flow components
    cross = Un[..., 1, None] * b[:, :, 0, :] - Un[..., 0, None] * b[:, :, 1, :]
    cnorm = np.linalg.norm(cross, axis=2)
    ok = okn & (cnorm > 1e-12).all(axis=1)
    cross = cross / np.maximum(cnorm, 1e-300)[..., None]

    # per point, the magnitude equation uses the stronger flow component
    comp = (np.abs(Un[..., 1]) > np.abs(Un[..., 0])).astype(int)
    rows5 = np.arange(5)
    tidx = np.arange(Tt)[:, None]
    bk = b[tidx, rows5, comp]  # (T, 5, 9)
    uk = Un[tidx, rows5, comp]  # (T, 5)
    drop = np.argmin(np.abs(uk), axis=1)
    keepm = np.ones((Tt, 5), dtype=bool)
    keepm[np.arange(Tt), drop] = False
    bk4 = bk[keepm].reshape(Tt, 4, 9)
    uk4 = uk[keepm].reshape(Tt, 4)
    ak4 = a_i[keepm].reshape(Tt, 4)
    ck4 = c_i[keepm].reshape(Tt, 4)

    # determinant at 10 Chebyshev nodes; the u column scaling (2+k)/2 is a
    # scalar column factor, nonvanishing on k > -2, dropped for root-finding
    nodes = (lo + hi) / 2 + (hi - lo) / 2 * np.cos(np.pi * (2 * np.arange(10) + 1) / 20)
    D = np.zeros((Tt, 10, 10, 10))
    D[:, :, :5, :9] = cross[:, None, :, :]
    bt = ak4[:, None, :] + ck4[:, None, :] * nodes[None, :, None]
    D[:, :, 5:9, :9] = bt[..., None] * bk4[:, None, :, :]
    D[:, :, 5:9, 9] = -uk4[:, None, :]
    D[:, :, 9, :] = _GAUGE_ROW
    dets = np.linalg.det(D)
    xs = (2 * nodes - (lo + hi)) / (hi - lo)
    coefs = np.linalg.solve(_cheb.chebvander(xs, 9), dets.T).T  # (T, 10)

    trial_idx: list[int] = []
    kvals: list[float] = []
    degrees = np.zeros(Tt, dtype=int)
    root_counts = np.zeros(Tt, dtype=int)
    for t in range(Tt):
        if not ok[t]:
            continue
        mx = np.abs(coefs[t]).max()
        if mx == 0.0:
            continue
        ct = _cheb.chebtrim(coefs[t], tol=1e-12 * mx)
        degrees[t] = len(ct) - 1
        if len(ct) < 2:
            continue
        rr = _cheb.chebroots(ct)
        rr = rr[np.abs(rr.imag) <= 1e-8 * (1 + np.abs(rr.real))].real
        kk = 0.5 * (hi - lo) * rr + 0.5 * (hi + lo)
        kk = kk[(kk > -2.0) & (kk >= lo) & (kk <= hi)]
        root_counts[t] = len(kk)
        for k in kk:
            trial_idx.append(t)
            kvals.append(float(k))
    if not trial_idx:
        empty = np.empty(0)
        return (
            np.empty(0, dtype=int),
            np.empty((0, 3, 3)),
            empty,
            empty,
            empty,
            degrees,
            root_counts,
        )

    ti = np.asarray(trial_idx, dtype=int)
    kv = np.asarray(kvals)
    # rebuild the defining system at each root with the true beta scaling
    betr = (ak4[ti] + ck4[ti] * kv[:, None]) * (2.0 / (2.0 + kv))[:, None]
    Dm = np.zeros((len(ti), 10, 10))
    Dm[:, :5, :9] = cross[ti]
    Dm[:, 5:9, :9] = betr[..., None] * bk4[ti]
    Dm[:, 5:9, 9] = -uk4[ti]
    Dm[:, 9, :] = _GAUGE_ROW
    _, S, Vt = np.linalg.svd(Dm)
    hraw = Vt[:, -1, :]
    keep = np.abs(hraw[:, 9]) >= 1e-10 * np.linalg.norm(hraw, axis=1)
    ti, kv, hraw, S = ti[keep], kv[keep], hraw[keep], S[keep]
    if len(ti) == 0:
        empty = np.empty(0)
        return (
            np.empty(0, dtype=int),
            np.empty((0, 3, 3)),
            empty,
            empty,
            empty,
            degrees,
            root_counts,
        )
    hh = hraw / hraw[:, 9:]
    def_res = S[:, -1]  # unit null vector residual of the defining system
    # full-sample residual: all 10 scaled flow equations, normalized coords
    beta_all = (a_i[ti] + c_i[ti] * kv[:, None]) * (2.0 / (2.0 + kv))[:, None]
    bh = np.einsum("mpri,mi->mpr", b[ti], hh[:, :9])
    full_res = np.abs(beta_all[..., None] * bh - Un[ti]).max(axis=(1, 2))
    Hn = hh[:, :9].reshape(-1, 3, 3)
    H = Ti[ti] @ Hn @ T[ti]
    return ti, H, kv, full_res, def_res, degrees, root_counts


# ---------------------------------------------------------------------------
# public single-sample solvers
# ---------------------------------------------------------------------------


def solve_gs_discrete(corrs) -> np.ndarray:
    """Discrete 4+ point homography by normalized DLT (total least squares)."""
    cs = as_corrset(corrs)
    if len(cs) < 4:
        raise DegenerateSampleError("need at least 4 correspondences")
    H, valid = dlt_batch(cs.p1[None], cs.p2[None])
    if not valid[0]:
        raise DegenerateSampleError(
            "design matrix rank-deficient (collinear points?) or singular H"
        )
    return H[0]


def solve_gs_diff(corrs) -> np.ndarray:
    """Differential 4+ point homography; gauge fixed by the min-norm solution."""
    cs = as_corrset(corrs)
    if len(cs) < 4:
        raise DegenerateSampleError("need at least 4 correspondences")
    betas = np.ones((1, len(cs)))
    H, valid = diff_lstsq_batch(cs.p1[None], cs.u[None], betas)
    if not valid[0]:
        raise DegenerateSampleError("differential system rank < 8")
    return H[0]


def solve_rs_constvel(corrs, rs: RsParams) -> RsDiffModel:
    """Constant-velocity RS fit: k fixed at 0, per-point beta known."""
    cs = as_corrset(corrs)
    if len(cs) < 4:
        raise DegenerateSampleError("need at least 4 correspondences")
    y1 = cs.p1[:, 1]
    y2 = y1 + cs.u[:, 1]
    betas = (1.0 + rs.gamma * (y2 - y1) / rs.h)[None, :]
    H, valid = diff_lstsq_batch(cs.p1[None], cs.u[None], betas)
    if not valid[0]:
        raise DegenerateSampleError("weighted differential system rank < 8")
    return RsDiffModel(H[0], 0.0, rs)


def solve_rs_constacc_5pt(corrs, rs: RsParams, k_range=DEFAULT_K_RANGE) -> SolverOutput:
    """Minimal 5-point RS solve for (H, k) via the determinant polynomial.

    Returns every admissible real root's model, best full-sample residual
    first. Raises UnobservableAccelerationError for gamma = 0 and
    NoSolutionError when no admissible root exists in k_range.
    """
    cs = as_corrset(corrs)
    if len(cs) != 5:
        raise DegenerateSampleError(f"minimal solver takes exactly 5 points, got {len(cs)}")
    ti, H, kv, full_res, def_res, degrees, root_counts = rs5_batch(
        cs.p1[None], cs.u[None], rs, k_range
    )
    if len(ti) == 0:
        if root_counts[0] == 0 and degrees[0] == 0:
            raise DegenerateSampleError("zero-flow point or coincident sample")
        raise NoSolutionError(f"no admissible real root in k_range {k_range}")
    order = np.argsort(full_res, kind="stable")
    models = [RsDiffModel(H[i], float(kv[i]), rs) for i in order]
    y1 = cs.p1[:, 1]
    diagnostics = {
        "poly_degree": int(degrees[0]),
        "root_count": int(root_counts[0]),
        "full_residuals": full_res[order].tolist(),
        "defining_residuals": def_res[order].tolist(),
        "scanline_spread": float((y1.max() - y1.min()) / rs.h),
    }
    return SolverOutput(models=models, diagnostics=diagnostics)


def solve_rs_weighted(corrs, weights, k: float, rs: RsParams) -> np.ndarray:
    """Weighted RS least squares at fixed k (the warp-field kernel).

    Minimizes sum_i || w_i * (beta_i(k) * b_i h - u_i) ||^2 in normalized
    coordinates and returns the de-normalized H.
    """
    cs = as_corrset(corrs)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(cs),) or (w < 0).any():
        raise ValueError("weights must be a nonnegative vector matching corrs")
    if (w > 0).sum() < 5:
        raise DegenerateSampleError("need at least 5 positively weighted points")
    y1 = cs.p1[:, 1]
    y2 = y1 + cs.u[:, 1]
    betas = np.asarray(beta(k, y1, y2, rs))[None, :]
    # fold weights into both sides of the row equations
    T, Ti, P1n, s, okn = hartley_batch(cs.p1[None])
    if not okn[0]:
        raise DegenerateSampleError("all points coincident")
    Un = cs.u[None] * s[:, None, None]
    b = flow_coeff_rows(P1n)
    B = (w[None, :, None, None] * betas[..., None, None] * b).reshape(1, -1, 9)
    rhs = (w[None, :, None] * Un).reshape(1, -1)
    Ub, S, Vt = np.linalg.svd(B, full_matrices=False)
    if S[0, 7] <= 1e-10 * S[0, 0]:
        raise DegenerateSampleError("weighted system rank < 8")
    tol = S[0, 0] * 1e-10
    Sinv = np.where(S[0] > tol, 1.0 / np.where(S[0] > tol, S[0], 1.0), 0.0)
    hn = Vt[0].T @ (Sinv * (Ub[0].T @ rhs[0]))
    return denormalize_h(hn.reshape(3, 3), T[0])
