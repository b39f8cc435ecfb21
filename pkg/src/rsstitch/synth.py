"""Synthetic RS scene generation and procedural rendering.

Conventions fixed here and relied on by every consumer:
  - Camera intrinsics from width x height and horizontal FOV;
    f = width / (2 tan(FOV/2)), principal point at the image center.
  - A camera pose at scanline time fraction b maps world to camera as
    Xc = R(b*omega)^T (X - b*v). With this convention the instantaneous
    motion model H = -K([omega]x + v n^T / d) K^{-1} predicts the generated
    flows to first order exactly (the generator's master consistency check);
    applying the rotation un-transposed breaks that check at first order.
  - Frame-1 points are produced by the exact finite-pose scanline solve;
    frame-2 points by default by the exact differential forward map, so the
    (H, k) model reproduces flows to machine precision. A finite-pose
    frame-2 mode exists for image-consistent experiments; it carries the
    model-infidelity gap of the differential approximation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import MotionSpec, Plane, RsParams, beta1, beta2, flow_gs
from .errors import DegenerateConfigurationError, PointNotObservedError
from .render import forward_map_rs
from .core import RsDiffModel

__all__ = [
    "CameraConfig",
    "SyntheticScene",
    "skew",
    "rodrigues",
    "diff_homography",
    "project_rs",
    "sample_scene",
    "gen_correspondences",
    "add_uniform_outliers",
    "gen_two_plane",
    "plane_texture",
    "render_frame",
]


def skew(w):
    w = np.asarray(w, dtype=float)
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def rodrigues(w):
    """Rotation exp([w]x) by the closed form; Taylor guard near zero."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    S = skew(w)
    if th < 1e-12:
        return np.eye(3) + S + 0.5 * (S @ S)
    return np.eye(3) + (np.sin(th) / th) * S + ((1.0 - np.cos(th)) / th**2) * (S @ S)


def _rodrigues_many(W):
    """Vectorized Rodrigues for (N,3) axis-angle vectors."""
    W = np.asarray(W, dtype=float)
    th = np.linalg.norm(W, axis=-1)
    out = np.empty(W.shape[:-1] + (3, 3))
    S = np.zeros_like(out)
    S[..., 0, 1] = -W[..., 2]
    S[..., 0, 2] = W[..., 1]
    S[..., 1, 0] = W[..., 2]
    S[..., 1, 2] = -W[..., 0]
    S[..., 2, 0] = -W[..., 1]
    S[..., 2, 1] = W[..., 0]
    SS = S @ S
    small = th < 1e-12
    ths = np.where(small, 1.0, th)
    a = np.where(small, 1.0, np.sin(ths) / ths)
    b = np.where(small, 0.5, (1.0 - np.cos(ths)) / ths**2)
    out = np.eye(3) + a[..., None, None] * S + b[..., None, None] * SS
    return out


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera with a horizontal FOV and an RS readout model."""

    width: int = 1280
    height: int = 720
    fov_deg: float = 60.0
    rs: RsParams = RsParams(gamma=1.0, h=720)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera dims must be positive")
        if not (0.0 < self.fov_deg < 180.0):
            raise ValueError("FOV must be in (0, 180) degrees")

    @property
    def f(self) -> float:
        return self.width / (2.0 * np.tan(np.deg2rad(self.fov_deg) / 2.0))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [
                [self.f, 0.0, self.width / 2.0],
                [0.0, self.f, self.height / 2.0],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)


def diff_homography(camera: CameraConfig, motion: MotionSpec, plane: Plane) -> np.ndarray:
    """Pixel-frame differential homography -K([omega]x + v n^T / d) K^{-1}."""
    A = skew(motion.omega) + np.outer(motion.v, plane.n) / plane.d
    return -camera.K @ A @ camera.K_inv


def _project_at_beta(X, motion, bet):
    """Camera coordinates at time fraction bet: R(bet*omega)^T (X - bet*v)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bet = np.atleast_1d(np.asarray(bet, dtype=float))
    om = np.asarray(motion.omega, dtype=float)
    v = np.asarray(motion.v, dtype=float)
    R = _rodrigues_many(bet[:, None] * om)
    Xs = X - bet[:, None] * v
    return np.einsum("nji,nj->ni", R, Xs)  # R^T applied row-wise


def _pixel_at_beta(X, motion, bet, camera):
    Xc = _project_at_beta(X, motion, bet)
    z = Xc[:, 2]
    ok = z > 1e-9
    zs = np.where(ok, z, 1.0)
    px = camera.K @ (Xc / zs[:, None]).T
    out = px[:2].T
    out[~ok] = np.nan
    return out


def project_rs(X, motion: MotionSpec, frame: int, camera: CameraConfig,
               return_flags: bool = False):
    """Observed RS pixel(s) of world point(s) X in frame 1 or 2.

    Solves the scanline self-consistency g(y) = proj_y(pose(beta(y))) - y = 0
    on y in [0, h] to |g| <= 1e-9 by damped fixed-point iteration with a
    dense-bracketing fallback. With multiple admissible scanlines the one
    nearest the GS projection is taken and flagged. Points observed on no
    scanline raise PointNotObservedError (single input) or come back NaN
    (batched input).
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    n = len(Xb)
    rs, k = camera.rs, motion.k
    h = float(rs.h)

    def bet_of(y):
        return np.asarray(beta1(k, y, rs) if frame == 1 else beta2(k, y, rs))

    # GS reference scanline: pose at beta = 0 (frame 1) or 1 (frame 2)
    gs_ref = _pixel_at_beta(Xb, motion, np.full(n, 0.0 if frame == 1 else 1.0), camera)

    if rs.gamma == 0.0:
        # beta is y-independent: plain projection at the frame pose
        out = gs_ref
        flags = np.zeros(n, dtype=bool)
    else:
        y = np.clip(np.nan_to_num(gs_ref[:, 1], nan=0.5 * h), 0.0, h)
        for _ in range(60):
            py = _pixel_at_beta(Xb, motion, bet_of(y), camera)[:, 1]
            ynew = np.clip(np.where(np.isfinite(py), py, np.nan), 0.0, h)
            if np.allclose(np.nan_to_num(ynew - y), 0.0, atol=1e-13):
                y = ynew
                break
            y = ynew
        g = _pixel_at_beta(Xb, motion, bet_of(y), camera)[:, 1] - y
        conv = np.isfinite(g) & (np.abs(g) <= 1e-9) & (y >= 0.0) & (y <= h)

        flags = np.zeros(n, dtype=bool)
        need = ~conv
        # dense bracketing fallback and multiplicity scan
        grid = np.linspace(0.0, h, 65)
        gv = np.stack(
            [_pixel_at_beta(Xb, motion, bet_of(np.full(n, yy)), camera)[:, 1] - yy
             for yy in grid], axis=0
        )  # (65, n)
        sign = np.sign(gv)
        finite = np.isfinite(gv)
        cross = (sign[:-1] * sign[1:] < 0) & finite[:-1] & finite[1:]
        n_roots = cross.sum(axis=0) + (np.abs(gv) <= 1e-12).any(axis=0)
        flags = n_roots > 1

        for i in np.flatnonzero(need):
            yi = _bisect_root(lambda yy, ii=i: float(
                _pixel_at_beta(Xb[ii:ii + 1], motion,
                               bet_of(np.array([yy])), camera)[0, 1] - yy),
                grid, gv[:, i], gs_ref[i, 1])
            if yi is None:
                y[i] = np.nan
            else:
                y[i] = yi
        ok = np.isfinite(y)
        bet = bet_of(np.where(ok, y, 0.0))
        out = _pixel_at_beta(Xb, motion, bet, camera)
        out[~ok] = np.nan
        # keep the solved scanline (continuity guard against reprojection noise)
        out[ok, 1] = y[ok]

    if single:
        if not np.isfinite(out[0]).all():
            raise PointNotObservedError("no scanline observes this point")
        if return_flags:
            return out[0], bool(flags[0])
        return out[0]
    return (out, flags) if return_flags else out


def _bisect_root(gfun, grid, gvals, y_gs):
    """Bisection over the bracket whose root is nearest y_gs; None if none."""
    best = None
    for a, b, ga, gb in zip(grid[:-1], grid[1:], gvals[:-1], gvals[1:]):
        if not (np.isfinite(ga) and np.isfinite(gb)) or ga * gb > 0:
            continue
        lo, hi, glo = a, b, ga
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm = gfun(mid)
            if not np.isfinite(gm):
                break
            if glo * gm <= 0:
                hi = mid
            else:
                lo, glo = mid, gm
        root = 0.5 * (lo + hi)
        if abs(gfun(root)) <= 1e-9 and (best is None or abs(root - y_gs) < abs(best - y_gs)):
            best = root
    return best


@dataclass
class SyntheticScene:
    """A planar scene plus inter-frame motion; all points visible in both frames."""

    camera: CameraConfig
    motion: MotionSpec
    plane: Plane
    points: np.ndarray  # (n, 3) world points on the plane
    seed: int

    @property
    def h_true(self) -> np.ndarray:
        return diff_homography(self.camera, self.motion, self.plane)

    @property
    def model_true(self) -> RsDiffModel:
        return RsDiffModel(self.h_true, self.motion.k, self.camera.rs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "camera": {
                    "width": self.camera.width,
                    "height": self.camera.height,
                    "fov_deg": self.camera.fov_deg,
                    "gamma": self.camera.rs.gamma,
                },
                "motion": {
                    "omega": list(map(float, self.motion.omega)),
                    "v": list(map(float, self.motion.v)),
                    "k": self.motion.k,
                },
                "plane": {"n": list(map(float, self.plane.n)), "d": self.plane.d},
                "points": [list(map(float, p)) for p in self.points],
                "seed": self.seed,
            },
            indent=1,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SyntheticScene":
        d = json.loads(text)
        cam = CameraConfig(
            width=d["camera"]["width"],
            height=d["camera"]["height"],
            fov_deg=d["camera"]["fov_deg"],
            rs=RsParams(gamma=d["camera"]["gamma"], h=d["camera"]["height"]),
        )
        mo = MotionSpec(
            omega=np.array(d["motion"]["omega"]),
            v=np.array(d["motion"]["v"]),
            k=d["motion"]["k"],
        )
        pl = Plane(n=np.array(d["plane"]["n"]), d=d["plane"]["d"])
        return cls(cam, mo, pl, np.array(d["points"]), d["seed"])


def sample_plane(rng) -> Plane:
    """Random unit normal within 60 degrees of the optical axis, d = 1."""
    while True:
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        if n[2] < 0:
            n = -n
        if n[2] > 0.5:
            return Plane(n=n, d=1.0)


def sample_motion(rng, omega_mag_deg: float, v_mag: float, k: float) -> MotionSpec:
    """Random directions at the given magnitudes; k scales the shared direction."""
    wd = rng.normal(size=3)
    wd /= np.linalg.norm(wd)
    vd = rng.normal(size=3)
    vd /= np.linalg.norm(vd)
    return MotionSpec(omega=np.deg2rad(omega_mag_deg) * wd, v=v_mag * vd, k=k)


def sample_scene(
    camera: CameraConfig,
    motion: MotionSpec,
    seed,
    n: int = 100,
    margin: float = 2.0,
    frame2: str = "differential",
) -> SyntheticScene:
    """Plane + n world points, all visible in both frames with the margin.

    Points are backprojections of uniformly drawn frame-1-ish pixels onto
    the plane. Points and plane offset are rescaled so the mean point depth
    is 1 (pinning the depth-translation scale gauge); the camera translation
    is not part of that gauge, so visibility is re-checked under the final
    scale and the selection topped up until the whole set survives. Planes
    that cannot collect n visible points are redrawn from the same stream.
    """
    rng = np.random.default_rng(seed)
    W, H = camera.width, camera.height

    def visible(p):
        return (
            np.isfinite(p).all(axis=1)
            & (p[:, 0] >= margin) & (p[:, 0] <= W - 1 - margin)
            & (p[:, 1] >= margin) & (p[:, 1] <= H - 1 - margin)
        )

    def seen_both(X, plane):
        p1, _ = project_rs(X, motion, 1, camera, return_flags=True)
        ok = visible(p1)
        p2 = np.full_like(p1, np.nan)
        if ok.any():
            if frame2 == "finite":
                p2[ok] = project_rs(X[ok], motion, 2, camera)
            else:
                model = RsDiffModel(
                    diff_homography(camera, motion, plane), motion.k, camera.rs
                )
                p2[ok] = forward_map_rs(model, p1[ok])
        return ok & visible(p2)

    for _attempt in range(50):
        plane = sample_plane(rng)
        pool = []
        tries = 0
        while len(pool) < 3 * n and tries < 240:
            tries += 1
            m = 4 * n
            px = np.column_stack(
                [
                    rng.uniform(margin, W - 1 - margin, m),
                    rng.uniform(margin, H - 1 - margin, m),
                ]
            )
            ray = (camera.K_inv @ np.column_stack([px, np.ones(m)]).T).T
            denom = ray @ plane.n
            t = np.where(np.abs(denom) > 1e-12, plane.d / denom, -1.0)
            X = t[:, None] * ray
            X = X[t > 0.05]
            if len(X) == 0:
                continue
            pool.extend(X[seen_both(X, plane)])
        if len(pool) < n:
            continue
        pool = np.asarray(pool)
        sel = pool[:n]
        used = n
        for _gauge_pass in range(20):
            mz = sel[:, 2].mean()  # depth gauge: mean depth 1
            Xs = sel / mz
            pls = Plane(n=plane.n, d=plane.d / mz)
            vis = seen_both(Xs, pls)
            if vis.all():
                return SyntheticScene(camera, motion, pls, Xs, seed=_as_seed(seed))
            keep = sel[vis]
            need = n - len(keep)
            if used + need > len(pool):
                break
            sel = np.concatenate([keep, pool[used:used + need]], axis=0)
            used += need
    raise DegenerateConfigurationError(
        "could not sample a fully visible scene for this motion"
    )


def _as_seed(seed):
    if isinstance(seed, (list, tuple, np.ndarray)):
        return int(np.asarray(seed).ravel()[-1])
    return int(seed)


def gen_correspondences(
    scene: SyntheticScene,
    sigma_g: float = 0.0,
    rng=None,
    frame2: str = "differential",
):
    """Project scene points into both frames; optional Gaussian pixel noise.

    Noise is added independently to both frames' points (per coordinate).
    Returns (p1, u, truth) where truth carries the noise-free pixels and the
    generating model for error evaluation.
    """
    cam, motion = scene.camera, scene.motion
    p1 = project_rs(scene.points, motion, 1, cam)
    if frame2 == "finite":
        p2 = project_rs(scene.points, motion, 2, cam)
    else:
        p2 = forward_map_rs(scene.model_true, p1)
    ok = np.isfinite(p1).all(axis=1) & np.isfinite(p2).all(axis=1)
    p1, p2 = p1[ok], p2[ok]
    truth = {
        "p1": p1.copy(),
        "p2": p2.copy(),
        "H": scene.h_true,
        "k": motion.k,
        "model": scene.model_true,
    }
    if sigma_g > 0:
        if rng is None:
            rng = np.random.default_rng([scene.seed, 7])
        p1 = p1 + rng.normal(0.0, sigma_g, p1.shape)
        p2 = p2 + rng.normal(0.0, sigma_g, p2.shape)
    return p1, p2 - p1, truth


def add_uniform_outliers(p1, u, n_out: int, extent, rng):
    """Append n_out gross outliers: both endpoints uniform over the frame."""
    W, H = extent
    o1 = np.column_stack([rng.uniform(0, W - 1, n_out), rng.uniform(0, H - 1, n_out)])
    o2 = np.column_stack([rng.uniform(0, W - 1, n_out), rng.uniform(0, H - 1, n_out)])
    p1a = np.concatenate([p1, o1], axis=0)
    ua = np.concatenate([u, o2 - o1], axis=0)
    inlier_mask = np.zeros(len(p1a), dtype=bool)
    inlier_mask[: len(p1)] = True
    return p1a, ua, inlier_mask


def gen_two_plane(
    camera: CameraConfig,
    motion: MotionSpec,
    seed,
    n_major: int = 70,
    n_minor: int = 30,
    depth_ratio: float = 0.55,
):
    """Two coplanar clusters at different depths under one rigid motion.

    The minority plane occupies the left third of the frame so a local
    field can adapt to it. Returns (p1, u, plane_id) with plane_id 0 for
    the majority plane.
    """
    rng = np.random.default_rng(seed)
    W, H = camera.width, camera.height

    def pts_for(plane, count, x_range):
        Hm = diff_homography(camera, motion, plane)
        model = RsDiffModel(Hm, motion.k, camera.rs)
        out1, outu = [], []
        tries = 0
        while len(out1) < count and tries < 200 * count:
            tries += 1
            px = np.array([rng.uniform(*x_range), rng.uniform(2.0, H - 3.0)])
            ray = camera.K_inv @ np.array([px[0], px[1], 1.0])
            denom = ray @ plane.n
            if abs(denom) < 1e-9 or plane.d / denom <= 0.05:
                continue
            X = (plane.d / denom) * ray
            try:
                p1 = project_rs(X, motion, 1, camera)
            except PointNotObservedError:
                continue
            p2 = forward_map_rs(model, p1)
            if not np.isfinite(p2).all():
                continue
            if not (0 <= p1[0] < W and 0 <= p1[1] < H and 0 <= p2[0] < W and 0 <= p2[1] < H):
                continue
            out1.append(p1)
            outu.append(p2 - p1)
        if len(out1) < count:
            raise DegenerateConfigurationError("two-plane sampling failed")
        return np.asarray(out1), np.asarray(outu)

    plane_a = sample_plane(rng)
    plane_b = Plane(n=sample_plane(rng).n, d=plane_a.d * depth_ratio)
    p1a, ua = pts_for(plane_a, n_major, (W / 3.0, W - 3.0))
    p1b, ub = pts_for(plane_b, n_minor, (2.0, W / 3.0))
    p1 = np.concatenate([p1a, p1b], axis=0)
    u = np.concatenate([ua, ub], axis=0)
    plane_id = np.concatenate([np.zeros(n_major, int), np.ones(n_minor, int)])
    return p1, u, plane_id


# ---------------------------------------------------------------------------
# procedural textured-plane rendering


def plane_texture(plane: Plane, seed: int = 0):
    """Procedural texture on the plane: checker plus band-limited sinusoids.

    Returns f(points (N,3) on the plane) -> values in [0, 255]. Smooth
    everywhere (bilinear-friendly) with local variance in every window.
    """
    rng = np.random.default_rng([seed, 1234])
    n = plane.n
    a = np.array([0.0, 1.0, 0.0]) if abs(n[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    freqs = rng.uniform(15.0, 60.0, (6, 2))
    phases = rng.uniform(0, 2 * np.pi, 6)
    amps = rng.uniform(0.5, 1.0, 6)
    amps /= amps.sum()

    def tex(X):
        X = np.atleast_2d(X)
        uu = X @ e1
        vv = X @ e2
        cell = 0.06
        checker = ((np.floor(uu / cell) + np.floor(vv / cell)) % 2.0) * 2.0 - 1.0
        wave = np.zeros(len(X))
        for (fu, fv), ph, am in zip(freqs, phases, amps):
            wave += am * np.sin(fu * uu + fv * vv + ph)
        val = 127.5 + 55.0 * np.tanh(1.5 * (0.55 * checker + 0.8 * wave))
        return np.clip(val, 0.0, 255.0)

    return tex


def render_frame(scene: SyntheticScene, frame: int, texture=None) -> np.ndarray:
    """Render the textured plane through the finite-pose RS camera.

    Each output row y uses the pose at its own time fraction; rays
    intersect the plane and sample the procedural texture. Pixels whose
    ray misses the plane (or hits it behind the camera) render 0.
    """
    cam, motion, plane = scene.camera, scene.motion, scene.plane
    rs, k = cam.rs, motion.k
    if texture is None:
        texture = plane_texture(plane, seed=scene.seed)
    W, H = cam.width, cam.height
    out = np.zeros((H, W), dtype=np.uint8)
    xs = np.arange(W, dtype=float)
    Kinv = cam.K_inv
    om = np.asarray(motion.omega, dtype=float)
    v = np.asarray(motion.v, dtype=float)
    for y in range(H):
        bet = float(beta1(k, y, rs) if frame == 1 else beta2(k, y, rs))
        R = rodrigues(bet * om)
        rays = (Kinv @ np.stack([xs, np.full(W, float(y)), np.ones(W)])).T
        wdir = rays @ R.T  # camera->world: X = R Xc + bet*v
        denom = wdir @ plane.n
        tnum = plane.d - bet * (plane.n @ v)
        t = np.where(np.abs(denom) > 1e-12, tnum / denom, -1.0)
        ok = t > 1e-6
        X = t[:, None] * wdir + bet * v
        vals = np.zeros(W)
        if ok.any():
            vals[ok] = texture(X[ok])
        out[y] = np.clip(np.rint(vals), 0, 255).astype(np.uint8)
    return out
