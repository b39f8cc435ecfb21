"""Deterministic RANSAC over the homography solvers.

Protocol notes:
  - Every trial draws its sample from an independent RNG substream keyed by
    (seed, trial index), so serial and parallel schedules agree bit-for-bit.
  - Multi-root solvers (the 5-point RS solver) contribute one candidate per
    admissible root; each is scored independently. Root disambiguation thus
    happens here, by consensus, not inside the solver.
  - The winner is the max-consensus candidate; ties fall to the lower median
    residual, then to candidate order (trial ascending, root ascending).
    No refit happens inside `ransac`; `refit_consensus` is the explicit
    follow-up step.
  - The RS residual evaluates beta at the observed destination scanline
    (y2 = y1 + u_y) instead of solving the forward map per point: scoring
    cost dominates 1000-trial runs. Final benchmark numbers use the full
    forward-map residual from the render module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RsDiffModel, RsParams, as_corrset, beta, flow_gs
from .errors import EstimationFailureError
from .solvers import (
    DEFAULT_K_RANGE,
    diff_lstsq_batch,
    dlt_batch,
    rs5_batch,
    solve_gs_diff,
    solve_gs_discrete,
    solve_rs_constvel,
    solve_rs_weighted,
)

__all__ = [
    "RansacParams",
    "RobustEstimate",
    "SOLVER_IDS",
    "residual_gs_disc",
    "residual_rs",
    "ransac",
    "refit_consensus",
]

# canonical solver id -> (family, minimal sample size, parameter overrides)
SOLVER_IDS = {
    "gs-disc": ("gs-disc", 4, {}),
    "gs-diff": ("gs-diff", 4, {}),
    "rs-constvel": ("rs-constvel", 4, {}),
    "rs-constacc": ("rs-constacc", 5, {}),
    # paper-protocol variants of the discrete solver
    "gs-5point": ("gs-disc", 4, {"sample_size": 5}),
    "gs-moretrials": ("gs-disc", 4, {"trials": 1250}),
}


@dataclass(frozen=True)
class RansacParams:
    trials: int = 1000
    threshold: float = 1.0
    sample_size: int | None = None  # None -> solver minimum (or variant default)
    seed: int = 0
    k_range: tuple[float, float] = DEFAULT_K_RANGE

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


@dataclass
class RobustEstimate:
    """Best consensus model with its refit-free inlier set."""

    model: object  # 3x3 ndarray (discrete) or RsDiffModel (differential)
    inlier_indices: np.ndarray
    residuals: np.ndarray
    stats: dict = field(default_factory=dict)


def residual_gs_disc(H, corrs):
    """Discrete reprojection residual ||p2 - dehomog(H p1)|| per point.

    Points sent to infinity (third row annihilates p1) score +inf so they
    are counted as outliers rather than crashing the trial.
    """
    cs = as_corrset(corrs)
    return _res_disc_multi(np.asarray(H, dtype=float)[None], cs.p1, cs.u)[0]


def residual_rs(model: RsDiffModel, corrs):
    """RS flow residual ||u - beta(k, y1, y2_obs) * flow_gs(H, p1)||."""
    cs = as_corrset(corrs)
    return _res_diff_multi(
        np.asarray(model.h_mat, dtype=float)[None],
        np.array([model.k]),
        cs.p1,
        cs.u,
        model.rs,
    )[0]


def _res_disc_multi(Hs, p1, u):
    """(C,3,3) x (N,2) -> (C,N) discrete residuals."""
    xh = np.column_stack([p1, np.ones(len(p1))])
    hx = np.einsum("cij,nj->cni", Hs, xh)
    w = hx[..., 2]
    scale = np.abs(hx).max(axis=-1)
    bad = np.abs(w) <= 1e-12 * np.maximum(scale, 1e-300)
    w = np.where(bad, 1.0, w)
    pred = hx[..., :2] / w[..., None]
    r = np.linalg.norm(pred - (p1 + u)[None], axis=-1)
    r[bad] = np.inf
    return r


def _res_diff_multi(Hs, ks, p1, u, rs: RsParams):
    """(C,3,3),(C,) x (N,2) -> (C,N) differential residuals, beta at
    the observed destination scanline."""
    x, y = p1[:, 0], p1[:, 1]
    xh = np.column_stack([p1, np.ones(len(p1))])
    hx = np.einsum("cij,nj->cni", Hs, xh)
    f = np.stack([hx[..., 0] - x * hx[..., 2], hx[..., 1] - y * hx[..., 2]], axis=-1)
    if ks is None:
        bet = np.ones((len(Hs), len(p1)))
    else:
        bet = np.asarray(beta(ks[:, None], y, y + u[:, 1], rs))
    return np.linalg.norm(bet[..., None] * f - u[None], axis=-1)


def _draw_samples(n_pool, pool, trials, sample_size, seed):
    idx = np.empty((trials, sample_size), dtype=int)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        idx[t] = rng.choice(n_pool, size=sample_size, replace=False)
    return pool[idx]


def ransac(corrs, solver_id: str, params: RansacParams = RansacParams(),
           rs: RsParams | None = None, sample_pool=None) -> RobustEstimate:
    """Max-consensus estimation with deterministic per-trial substreams.

    sample_pool restricts which correspondences may enter minimal samples
    and the consensus score (held-out protocol); reported residuals always
    cover the full set. Raises EstimationFailureError when no trial yields
    an admissible model.
    """
    if solver_id not in SOLVER_IDS:
        raise ValueError(f"unknown solver id {solver_id!r}; known: {sorted(SOLVER_IDS)}")
    family, min_n, overrides = SOLVER_IDS[solver_id]
    trials = overrides.get("trials", params.trials)
    ss = params.sample_size or overrides.get("sample_size", min_n)
    if ss < min_n:
        raise ValueError(f"sample_size {ss} below solver minimum {min_n}")
    if family == "rs-constacc" and ss != 5:
        raise ValueError("the 5-point RS solver takes exactly 5 points per sample")
    if family != "gs-disc" and rs is None and family != "gs-diff":
        raise ValueError("differential RS solvers need RsParams")

    cs = as_corrset(corrs)
    n = len(cs)
    pool = np.arange(n) if sample_pool is None else np.asarray(sample_pool, dtype=int)
    if len(pool) < ss:
        raise ValueError("sampling pool smaller than the sample size")

    idx = _draw_samples(len(pool), pool, trials, ss, params.seed)
    P1s = cs.p1[idx]
    Us = cs.u[idx]

    # --- candidate generation (one batched pass over all trials)
    if family == "gs-disc":
        Hc, valid = dlt_batch(P1s, P1s + Us)
        trial_of = np.flatnonzero(valid)
        Hc = Hc[valid]
        ks = None
    elif family == "gs-diff":
        Hc, valid = diff_lstsq_batch(P1s, Us, np.ones((trials, ss)))
        trial_of = np.flatnonzero(valid)
        Hc = Hc[valid]
        ks = np.zeros(len(Hc))
    elif family == "rs-constvel":
        y1 = P1s[..., 1]
        y2 = y1 + Us[..., 1]
        betas = 1.0 + rs.gamma * (y2 - y1) / rs.h
        Hc, valid = diff_lstsq_batch(P1s, Us, betas)
        trial_of = np.flatnonzero(valid)
        Hc = Hc[valid]
        ks = np.zeros(len(Hc))
    else:  # rs-constacc
        trial_of, Hc, ks, _fr, _dr, _deg, _rc = rs5_batch(P1s, Us, rs, params.k_range)

    n_cand = len(Hc)
    if n_cand == 0:
        raise EstimationFailureError(
            f"no admissible model in {trials} trials of {solver_id}"
        )

    # --- batched scoring
    if family == "gs-disc":
        R = _res_disc_multi(Hc, cs.p1, cs.u)
    else:
        R = _res_diff_multi(Hc, ks, cs.p1, cs.u, rs)
    Rpool = R[:, pool]
    counts = (Rpool <= params.threshold).sum(axis=1)
    medians = np.median(Rpool, axis=1)
    order = np.lexsort((medians, -counts))  # stable: candidate order last
    best = order[0]

    r_best = R[best]
    inliers = np.flatnonzero(r_best <= params.threshold)
    if family == "gs-disc":
        model = Hc[best]
    else:
        model = RsDiffModel(Hc[best], float(ks[best]), rs)
    stats = {
        "solver": solver_id,
        "trials": int(trials),
        "valid_candidates": int(n_cand),
        "best_trial": int(trial_of[best]),
        "best_count": int(counts[best]),
        "best_median": float(medians[best]),
        "threshold": float(params.threshold),
        "seed": int(params.seed),
        "sample_size": int(ss),
    }
    return RobustEstimate(
        model=model, inlier_indices=inliers, residuals=r_best, stats=stats
    )


def refit_consensus(corrs, estimate: RobustEstimate, solver_id: str,
                    rs: RsParams | None = None):
    """Least-squares refit on the consensus inliers (the explicit step that
    `ransac` deliberately does not perform). Returns a model of the same
    type; k is kept fixed for the RS solver (pure motion parameter)."""
    family, _, _ = SOLVER_IDS[solver_id]
    cs = as_corrset(corrs)
    inl = cs.subset(estimate.inlier_indices)
    if family == "gs-disc":
        return solve_gs_discrete(inl)
    if family == "gs-diff":
        return solve_gs_diff(inl)
    if family == "rs-constvel":
        return solve_rs_constvel(inl, rs)
    H = solve_rs_weighted(inl, np.ones(len(inl)), estimate.model.k, rs)
    return RsDiffModel(H, estimate.model.k, rs)
