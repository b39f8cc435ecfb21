"""Shared fixtures plus an independent reference implementation.

Every ref_* helper below re-derives its quantity from scratch (scalar
loops, brentq bracketing, explicit formulas) and shares no code with the
package, so a test can compare the library against a second route that
cannot inherit its bugs.
"""

import numpy as np
import pytest
from scipy.optimize import brentq

REF_W, REF_H = 1280, 720
REF_F = REF_W / (2.0 * np.tan(np.deg2rad(30.0)))
REF_K = np.array([[REF_F, 0.0, REF_W / 2], [0.0, REF_F, REF_H / 2], [0.0, 0.0, 1.0]])
REF_KI = np.linalg.inv(REF_K)


def ref_skew(w):
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def ref_rodrigues(w):
    th = np.linalg.norm(w)
    if th < 1e-12:
        return np.eye(3) + ref_skew(w)
    a = w / th
    A = ref_skew(a)
    return np.eye(3) + np.sin(th) * A + (1.0 - np.cos(th)) * (A @ A)


def ref_beta1(k, y1, gamma, h):
    t = gamma * np.asarray(y1, dtype=float) / h
    return (t + 0.5 * k * t * t) * (2.0 / (2.0 + k))


def ref_beta2(k, y2, gamma, h):
    t = 1.0 + gamma * np.asarray(y2, dtype=float) / h
    return (t + 0.5 * k * t * t) * (2.0 / (2.0 + k))


def ref_flow(Hm, p):
    """Differential flow, one point at a time (no vectorized shortcuts)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    out = np.zeros_like(p)
    for i, (x, y) in enumerate(p):
        xh = np.array([x, y, 1.0])
        Hx = Hm @ xh
        out[i] = [Hx[0] - x * Hx[2], Hx[1] - y * Hx[2]]
    return out if len(out) > 1 else out[0]


def ref_diff_h(omega, v, nvec, d):
    return REF_K @ (-(ref_skew(omega) + np.outer(v, nvec) / d)) @ REF_KI


def ref_forward_map(Hm, k, gamma, h, p1):
    """Frame-1 pixel -> frame-2 pixel under the scanline-scaled flow model.

    Solves y2 = y1 + (beta2(k,y2) - beta1(k,y1)) * f_y per point with
    brentq on a dense bracket (no quadratic shortcuts), then x2 from the
    solved scaling.
    """
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    out = np.full_like(p1, np.nan)
    for i, (x1, y1) in enumerate(p1):
        fx, fy = ref_flow(Hm, (x1, y1))
        b1 = ref_beta1(k, y1, gamma, h)

        def g(y2):
            return y1 + (ref_beta2(k, y2, gamma, h) - b1) * fy - y2

        ygs = y1 + fy
        grid = np.linspace(-0.5 * h, 1.5 * h, 201)
        vals = np.array([g(y) for y in grid])
        roots = []
        for j in range(len(grid) - 1):
            if vals[j] == 0.0:
                roots.append(grid[j])
            elif np.sign(vals[j]) != np.sign(vals[j + 1]):
                roots.append(brentq(g, grid[j], grid[j + 1], xtol=1e-12))
        if not roots:
            continue
        y2 = min(roots, key=lambda r: abs(r - ygs))
        bb = ref_beta2(k, y2, gamma, h) - b1
        out[i] = [x1 + bb * fx, y2]
    return out if len(out) > 1 else out[0]


def ref_project_frame(X, omega, v, k, gamma, h, frame):
    """Finite-pose scanline projection by bracketed root finding.

    Scanline pose: Xc = R(beta*omega)^T (X - beta*v), beta = beta1 or
    beta2 of the solved scanline. Returns None when no scanline sees X.
    """
    bfun = ref_beta1 if frame == 1 else ref_beta2

    def pixel_at(y):
        b = bfun(k, y, gamma, h)
        q = REF_K @ (ref_rodrigues(b * np.asarray(omega)).T @ (np.asarray(X) - b * np.asarray(v)))
        if q[2] <= 1e-9:
            return None
        return q[:2] / q[2]

    def g(y):
        px = pixel_at(y)
        return np.inf if px is None else px[1] - y

    grid = np.linspace(0.0, h, 65)
    vals = np.array([g(y) for y in grid])
    for j in range(len(grid) - 1):
        a, b = vals[j], vals[j + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            return pixel_at(grid[j])
        if np.sign(a) != np.sign(b):
            y = brentq(g, grid[j], grid[j + 1], xtol=1e-11)
            return pixel_at(y)
    if np.isfinite(vals[-1]) and vals[-1] == 0.0:
        return pixel_at(grid[-1])
    return None


def ref_plane_and_points(rng, n=100, margin=2.0):
    """Random visible plane and n frame-1-pixel backprojections, mean depth 1."""
    while True:
        nvec = rng.normal(size=3)
        nvec /= np.linalg.norm(nvec)
        if nvec[2] < 0:
            nvec = -nvec
        if nvec[2] > 0.5:
            break
    d = 1.0
    pts = []
    while len(pts) < n:
        px = rng.uniform(margin, REF_W - margin)
        py = rng.uniform(margin, REF_H - margin)
        ray = REF_KI @ np.array([px, py, 1.0])
        t = d / (nvec @ ray)
        if t <= 0.05:
            continue
        pts.append(t * ray)
    X = np.asarray(pts)
    m = X[:, 2].mean()
    return nvec, X / m, d / m


def ref_scene_corrs(seed, gamma, mw_deg=3.0, mv=0.03, k=0.0, n=100, h=REF_H):
    """Noise-free correspondences: finite frame-1 poses, flow-model frame 2.

    Returns (p1, u, Hpx). Points whose forward map leaves the frame are
    dropped, so len(p1) <= n.
    """
    rng = np.random.default_rng([seed, 404])
    nvec, X, d = ref_plane_and_points(rng, n=n)
    wd = rng.normal(size=3)
    wd /= np.linalg.norm(wd)
    vd = rng.normal(size=3)
    vd /= np.linalg.norm(vd)
    omega = np.deg2rad(mw_deg) * wd
    v = mv * vd
    Hpx = ref_diff_h(omega, v, nvec, d)
    p1 = []
    for Xi in X:
        px = ref_project_frame(Xi, omega, v, k, gamma, h, frame=1)
        if px is not None and 0 <= px[0] < REF_W and 0 <= px[1] < h:
            p1.append(px)
    p1 = np.asarray(p1)
    p2 = ref_forward_map(Hpx, k, gamma, h, p1)
    ok = np.isfinite(p2).all(axis=1)
    ok &= (p2[:, 0] >= 0) & (p2[:, 0] < REF_W) & (p2[:, 1] >= 0) & (p2[:, 1] < h)
    return p1[ok], (p2 - p1)[ok], Hpx


@pytest.fixture(scope="session")
def rs_full():
    from rsstitch.core import RsParams

    return RsParams(gamma=1.0, h=REF_H)


@pytest.fixture(scope="session")
def stitch_pair():
    """Procedural RS pair at 640x360 with matching correspondences.

    Frames and points come from the same finite-pose projection so the
    imagery is consistent with the flows. Session-scoped: rendering and
    projection dominate the cost.
    """
    from rsstitch.core import CorrSet, RsParams
    from rsstitch.synth import (
        CameraConfig,
        gen_correspondences,
        render_frame,
        sample_motion,
        sample_scene,
    )

    W, H = 640, 360
    cam = CameraConfig(width=W, height=H, rs=RsParams(gamma=1.0, h=H))
    motion = sample_motion(np.random.default_rng(21), 6.0, 0.05, 0.8)
    scene = sample_scene(cam, motion, seed=77, n=120, frame2="finite")
    img1 = render_frame(scene, 1)
    img2 = render_frame(scene, 2)
    p1, u, truth = gen_correspondences(scene, sigma_g=0.0, frame2="finite")
    return {
        "scene": scene,
        "img1": img1,
        "img2": img2,
        "corrs": CorrSet(p1, u),
        "truth": truth,
        "size": (W, H),
    }
