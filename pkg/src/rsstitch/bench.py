"""Parameter sweeps, CDF evaluation, and the stitching quality metric.

Sweep protocol (recorded as comment lines in every CSV): each cell runs
RANSAC (default 1000 trials, 1.0 px threshold) followed by a uniform
least-squares refit on the consensus inliers, for noise-free and noisy
cells alike. Errors are measured against the retained noise-free pixel
pairs: discrete models by the discrete reprojection residual, RS models by
the full forward-map residual. Every random draw descends from the spec
seed, so CSV output is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, uniform_filter

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .core import CorrSet, RsParams
from .errors import (
    DegenerateSampleError,
    EstimationFailureError,
    UndefinedMetricError,
    UnobservableAccelerationError,
)
from .render import forward_map_rs
from .robust import RansacParams, ransac, refit_consensus, residual_gs_disc, residual_rs
from .synth import CameraConfig, gen_correspondences, sample_motion, sample_scene

__all__ = [
    "SweepSpec",
    "run_sweep",
    "rows_to_csv",
    "load_sweep_spec",
    "evaluate_checks",
    "eval_cdf",
    "ransac_holdout",
    "rmse_ncc",
]

_PARAM_BOUNDS = {
    "gamma": (0.0, 1.0),
    "omega": (0.0, 9.0),
    "v": (0.0, 0.1),
    "k": (-1.0, 1.0),
}


@dataclass
class SweepSpec:
    """One swept parameter, the fixed values of the others, and the protocol."""

    param: str
    values: list
    gamma: float = 1.0
    omega_deg: float = 3.0
    v_mag: float = 0.03
    k: float | None = None  # None -> uniform in k_random_range per config
    k_random_range: tuple = (-1.0, 1.0)
    sigma_g: float = 0.0
    n_configs: int = 100
    n_points: int = 100
    solvers: list = field(default_factory=lambda: ["gs-disc", "rs-constacc"])
    seed: int = 0
    trials: int = 1000
    threshold: float = 1.0

    def __post_init__(self):
        if self.param not in _PARAM_BOUNDS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        lo, hi = _PARAM_BOUNDS[self.param]
        vals = [float(v) for v in self.values]
        if not vals:
            raise ValueError("sweep needs at least one value")
        if min(vals) < lo - 1e-12 or max(vals) > hi + 1e-12:
            raise ValueError(f"{self.param} values must lie in [{lo}, {hi}]")
        if not self.solvers:
            raise ValueError("solver list must not be empty")
        if self.sigma_g not in (0.0, 1.0, 2.0):
            raise ValueError("sigma_g must be one of 0, 1, 2 px")
        self.values = vals


def _cell_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _cell_params(spec: SweepSpec, cfg_i: int, solver_i: int) -> RansacParams:
    # The trial stream is paired across the swept axis (no value index in the
    # seed) so per-config error curves are comparable point by point.
    return RansacParams(
        trials=spec.trials,
        threshold=spec.threshold,
        seed=_cell_seed(spec.seed, cfg_i, solver_i),
    )


def _config_motion(spec: SweepSpec, value: float, cfg_i: int):
    """Motion magnitudes for one cell; directions and random k depend only on
    the config index so scenes stay comparable across the swept axis."""
    rng = np.random.default_rng([spec.seed, 17, cfg_i])
    om = spec.omega_deg
    vm = spec.v_mag
    kk = spec.k
    if spec.param == "omega":
        om = value
    elif spec.param == "v":
        vm = value
    elif spec.param == "k":
        kk = value
    if kk is None:
        kk = float(rng.uniform(*spec.k_random_range))
    motion = sample_motion(rng, om, vm, kk)
    gamma = value if spec.param == "gamma" else spec.gamma
    return motion, gamma


def _cell_error(solver_id: str, model, truth) -> float:
    p1c, p2c = truth["p1"], truth["p2"]
    clean = CorrSet(p1c, p2c - p1c)
    if solver_id in ("gs-disc", "gs-5point", "gs-moretrials"):
        r = residual_gs_disc(model, clean)
        return float(np.mean(r))
    pred = forward_map_rs(model, p1c)
    if not np.isfinite(pred).all():
        raise EstimationFailureError("estimated model leaves points unmapped")
    return float(np.mean(np.linalg.norm(pred - p2c, axis=1)))


def run_sweep(spec: SweepSpec):
    """Run every (sweep value, config, solver) cell; returns result rows.

    Each row: dict with sweep_param, sweep_value, solver, sigma_g,
    mean_err_px, std_err_px, n_configs, failures. Failed cells count in
    `failures` and are excluded from the mean, never silently dropped.
    """
    rows = []
    for vi, value in enumerate(spec.values):
        per_solver = {s: [] for s in spec.solvers}
        fails = {s: 0 for s in spec.solvers}
        for ci in range(spec.n_configs):
            motion, gamma = _config_motion(spec, value, ci)
            cam = CameraConfig(rs=RsParams(gamma=gamma, h=720))
            scene = sample_scene(cam, motion, [spec.seed, 29, ci], n=spec.n_points)
            noise_rng = np.random.default_rng(
                [spec.seed, 31, ci, vi, int(spec.sigma_g * 1000)]
            )
            p1, u, truth = gen_correspondences(scene, spec.sigma_g, rng=noise_rng)
            cs = CorrSet(p1, u)
            for si, solver_id in enumerate(spec.solvers):
                try:
                    est = ransac(
                        cs, solver_id, _cell_params(spec, ci, si), rs=cam.rs
                    )
                    try:
                        model = refit_consensus(cs, est, solver_id, rs=cam.rs)
                    except DegenerateSampleError:
                        model = est.model
                    per_solver[solver_id].append(_cell_error(solver_id, model, truth))
                except (EstimationFailureError, UnobservableAccelerationError):
                    fails[solver_id] += 1
        for solver_id in spec.solvers:
            errs = np.asarray(per_solver[solver_id])
            rows.append(
                {
                    "sweep_param": spec.param,
                    "sweep_value": value,
                    "solver": solver_id,
                    "sigma_g": spec.sigma_g,
                    "mean_err_px": float(errs.mean()) if len(errs) else float("nan"),
                    "std_err_px": float(errs.std()) if len(errs) else float("nan"),
                    "n_configs": len(errs),
                    "failures": fails[solver_id],
                }
            )
    return rows


def rows_to_csv(rows, spec: SweepSpec) -> str:
    """Byte-stable CSV with the protocol recorded as comment lines."""
    lines = [
        f"# protocol: ransac(trials={spec.trials}, threshold={spec.threshold:.9g}px)"
        " + uniform consensus refit, all cells",
        f"# errors vs noise-free ground-truth pairs; seed={spec.seed}",
        "sweep_param,sweep_value,solver,sigma_g,mean_err_px,std_err_px,n_configs,failures",
    ]
    for r in rows:
        lines.append(
            f"{r['sweep_param']},{r['sweep_value']:.9g},{r['solver']},"
            f"{r['sigma_g']:.9g},{r['mean_err_px']:.9g},{r['std_err_px']:.9g},"
            f"{r['n_configs']},{r['failures']}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# TOML sweep specs and acceptance checks


def load_sweep_spec(path):
    """Parse a TOML sweep spec: a [sweep] table plus optional [[checks]]."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if "sweep" not in data:
        raise ValueError("spec file needs a [sweep] table")
    sw = dict(data["sweep"])
    if "k_random_range" in sw:
        sw["k_random_range"] = tuple(sw["k_random_range"])
    spec = SweepSpec(**sw)
    checks = data.get("checks", [])
    for c in checks:
        if "kind" not in c:
            raise ValueError("every [[checks]] entry needs a 'kind'")
    return spec, checks


def _series(rows, solver):
    pts = sorted(
        (r["sweep_value"], r["mean_err_px"]) for r in rows if r["solver"] == solver
    )
    if not pts:
        raise ValueError(f"no rows for solver {solver!r}")
    return pts


def _value_at(pts, x):
    for v, e in pts:
        if abs(v - x) <= 1e-9:
            return e
    raise ValueError(f"no sweep value {x} in results")


def evaluate_checks(rows, checks):
    """Evaluate [[checks]] entries against sweep rows.

    Kinds:
      order:    mean(a) <= mean(b) at every sweep value >= from_value
      ratio:    mean(solver at num_at) >= min * mean(solver at den_at)
      flat:     max/min of mean(solver) across the sweep <= max_ratio
      peak:     mean(solver at at) >= min_ratio * mean(solver at baseline)
      monotone: mean(solver) non-decreasing for sweep values >= from_value
    Returns a list of (label, passed, detail) tuples.
    """
    results = []
    for c in checks:
        kind = c["kind"]
        if kind == "order":
            a = _series(rows, c["a"])
            b = _series(rows, c["b"])
            frm = float(c.get("from_value", -np.inf))
            bad = [
                v for (v, ea), (_, eb) in zip(a, b) if v >= frm - 1e-12 and ea > eb
            ]
            ok = not bad
            detail = f"{c['a']} <= {c['b']} for values >= {frm}" + (
                "" if ok else f"; violated at {bad}"
            )
        elif kind == "ratio":
            pts = _series(rows, c["solver"])
            num = _value_at(pts, float(c["num_at"]))
            den = _value_at(pts, float(c["den_at"]))
            ratio = num / den if den > 0 else np.inf
            ok = ratio >= float(c["min"])
            detail = f"{c['solver']}: {num:.4g}/{den:.4g} = {ratio:.3g} (need >= {c['min']})"
        elif kind == "flat":
            pts = _series(rows, c["solver"])
            errs = [e for _, e in pts]
            ratio = max(errs) / min(errs) if min(errs) > 0 else np.inf
            ok = ratio <= float(c["max_ratio"])
            detail = f"{c['solver']} max/min = {ratio:.3g} (need <= {c['max_ratio']})"
        elif kind == "peak":
            pts = _series(rows, c["solver"])
            at = _value_at(pts, float(c["at"]))
            base = _value_at(pts, float(c["baseline"]))
            ratio = at / base if base > 0 else np.inf
            ok = ratio >= float(c["min_ratio"])
            detail = (
                f"{c['solver']} at {c['at']}: {ratio:.3g}x baseline"
                f" (need >= {c['min_ratio']})"
            )
        elif kind == "monotone":
            pts = _series(rows, c["solver"])
            frm = float(c.get("from_value", -np.inf))
            seq = [e for v, e in pts if v >= frm - 1e-12]
            ok = all(b >= a - 1e-12 for a, b in zip(seq, seq[1:]))
            detail = f"{c['solver']} non-decreasing from {frm}"
        else:
            raise ValueError(f"unknown check kind {kind!r}")
        results.append((f"{kind}:{c.get('solver', c.get('a', ''))}", bool(ok), detail))
    return results


# ---------------------------------------------------------------------------
# CDF evaluation and the held-out protocol


def eval_cdf(medians):
    """Empirical CDF of per-pair median residuals: (n,2) sorted values with
    CDF level i/n at the i-th order statistic."""
    m = np.sort(np.asarray(medians, dtype=float))
    if m.ndim != 1 or len(m) == 0:
        raise ValueError("need a non-empty 1-D median list")
    levels = np.arange(1, len(m) + 1) / len(m)
    return np.column_stack([m, levels])


def ransac_holdout(corrs, solver_id, params, rs=None, holdout_idx=None,
                   holdout_frac=0.25, seed=0):
    """RANSAC that never samples (or consensus-scores) the held-out points.

    Returns (estimate, median_in, median_out) with medians of the public
    residual over the training and held-out index sets.
    """
    cs = corrs if isinstance(corrs, CorrSet) else CorrSet(corrs[0], corrs[1])
    n = len(cs)
    if holdout_idx is None:
        rng = np.random.default_rng([seed, 997])
        holdout_idx = rng.choice(n, size=max(1, int(round(holdout_frac * n))),
                                 replace=False)
    holdout_idx = np.asarray(holdout_idx, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[holdout_idx] = False
    train_idx = np.flatnonzero(mask)
    est = ransac(cs, solver_id, params, rs=rs, sample_pool=train_idx)
    med_in = float(np.median(est.residuals[train_idx]))
    med_out = float(np.median(est.residuals[holdout_idx]))
    return est, med_in, med_out


# ---------------------------------------------------------------------------
# stitching quality metric


def _gray(img):
    a = np.asarray(img, dtype=float)
    if a.ndim == 3:
        a = 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    return a


def rmse_ncc(img_a, img_b, mask=None):
    """RMSE of (1 - NCC) over the overlap, NCC on 3x3 windows; range [0, 2].

    Only pixels whose full 3x3 window lies inside the overlap (and the
    image interior) are scored. Windows constant in both images count as
    perfectly correlated; windows constant in exactly one image are
    excluded from the average. An empty overlap (or one with no scorable
    window) raises UndefinedMetricError.
    """
    a = _gray(img_a)
    b = _gray(img_b)
    if a.shape != b.shape:
        raise ValueError("images must share a shape")
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValueError("mask must match the image shape")
    if not mask.any():
        raise UndefinedMetricError("empty overlap")

    # full-window validity: erode the overlap and stay off the image border
    core = binary_erosion(mask, structure=np.ones((3, 3)), border_value=0)
    if not core.any():
        raise UndefinedMetricError("overlap too thin for 3x3 windows")

    uf = lambda x: uniform_filter(x, size=3, mode="nearest")  # noqa: E731
    ma, mb = uf(a), uf(b)
    va = uf(a * a) - ma * ma
    vb = uf(b * b) - mb * mb
    cov = uf(a * b) - ma * mb
    va = np.maximum(va, 0.0)
    vb = np.maximum(vb, 0.0)
    const_a = va <= 1e-9
    const_b = vb <= 1e-9
    both_const = const_a & const_b
    one_const = const_a ^ const_b
    denom = np.sqrt(va * vb)
    denom = np.where(denom <= 0, 1.0, denom)
    ncc = np.clip(cov / denom, -1.0, 1.0)
    ncc = np.where(both_const, 1.0, ncc)
    scored = core & ~one_const
    if not scored.any():
        raise UndefinedMetricError("no scorable 3x3 windows in the overlap")
    return float(np.sqrt(np.mean((1.0 - ncc[scored]) ** 2)))
