"""Point mapping and image compositing for RS-aware stitching.

Mapping directions used throughout:
  stitch: frame-1 pixels -> frame-2 pixel coordinates (the canvas frame).
  rectify: each frame's pixels -> the shared global-shutter canvas.

All RS maps share one scanline-timing model: a point observed on scanline y
of frame i has time fraction beta_i(k, y). The frame-2 scanline of a mapped
point is implicit (the destination row determines its own timestamp), which
makes the forward map a scalar quadratic per point; inverses that have no
closed form use vectorized Newton iterations.

Points that leave the valid scanline window [-h/2, 3h/2], fall behind the
camera, or fail to converge are returned as NaN and excluded by masks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .core import RsDiffModel, beta1, beta2
from .warpfield import WarpField

__all__ = [
    "Canvas",
    "forward_map_rs",
    "rectify_point",
    "invrect_point",
    "inverse_stitch_map",
    "map_discrete",
    "inverse_discrete",
    "bilinear_sample",
    "feather_weights",
    "overlap_diff",
    "warp_and_stitch",
    "rectify_image",
    "chain_pairwise",
    "save_png",
]

_STEP_TOL = 1e-8
_MAX_ITERS = 20


# ---------------------------------------------------------------------------
# model plumbing


def _h_at(model, pts):
    """Per-point 3x3 matrices: (3,3) shared or (N,3,3) from a field."""
    if isinstance(model, WarpField):
        return model.models_at(pts)
    if isinstance(model, RsDiffModel):
        return model.h_mat
    return np.asarray(model, dtype=float)


def _rs_of(model):
    if isinstance(model, WarpField):
        if model.kind != "rs":
            raise ValueError("RS mapping needs an 'rs' field")
        return model.rs, model.k
    return model.rs, model.k


def _flow(Hs, pts):
    """Differential flow; Hs (3,3) or (N,3,3), pts (N,2) -> (N,2)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    xh = np.stack([x, y, np.ones_like(x)], axis=-1)
    if Hs.ndim == 2:
        hx = xh @ Hs.T
    else:
        hx = np.einsum("...ij,...j->...i", Hs, xh)
    return np.stack(
        [hx[..., 0] - x * hx[..., 2], hx[..., 1] - y * hx[..., 2]], axis=-1
    )


def _flow_jac(Hs, pts):
    """Jacobian of the differential flow wrt the evaluation point, (N,2,2)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    if Hs.ndim == 2:
        Hs = np.broadcast_to(Hs, pts.shape[:-1] + (3, 3))
    w = Hs[..., 2, 0] * x + Hs[..., 2, 1] * y + Hs[..., 2, 2]
    J = np.empty(pts.shape[:-1] + (2, 2))
    J[..., 0, 0] = Hs[..., 0, 0] - w - x * Hs[..., 2, 0]
    J[..., 0, 1] = Hs[..., 0, 1] - x * Hs[..., 2, 1]
    J[..., 1, 0] = Hs[..., 1, 0] - y * Hs[..., 2, 0]
    J[..., 1, 1] = Hs[..., 1, 1] - w - y * Hs[..., 2, 1]
    return J


def _solve2(J, rhs):
    """Batched 2x2 solve; singular systems yield NaN."""
    a, b = J[..., 0, 0], J[..., 0, 1]
    c, d = J[..., 1, 0], J[..., 1, 1]
    det = a * d - b * c
    scale = np.maximum(np.abs(a) + np.abs(b) + np.abs(c) + np.abs(d), 1e-300)
    bad = np.abs(det) <= 1e-14 * scale * scale
    det = np.where(bad, 1.0, det)
    sx = (d * rhs[..., 0] - b * rhs[..., 1]) / det
    sy = (-c * rhs[..., 0] + a * rhs[..., 1]) / det
    out = np.stack([sx, sy], axis=-1)
    out[bad] = np.nan
    return out


def _pick_root(A, B, C, seed, h):
    """Roots of A y^2 + B y + C = 0 nearest seed, restricted to the scanline
    window [-h/2, 3h/2]; no admissible root -> NaN."""
    lin = np.abs(A) < 1e-18
    Bl = np.where(np.abs(B) < 1e-300, 1e-300, B)
    y_lin = -C / Bl

    disc = B * B - 4.0 * A * C
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    # numerically stable pair via the larger-magnitude intermediate
    q = -0.5 * (B + np.where(B >= 0, 1.0, -1.0) * sq)
    A_safe = np.where(lin, 1.0, A)
    q_safe = np.where(np.abs(q) < 1e-300, 1e-300, q)
    r1 = np.where(lin, y_lin, q / A_safe)
    r2 = np.where(lin, y_lin, C / q_safe)

    lo, hi = -0.5 * h, 1.5 * h
    in1 = ok & (r1 >= lo) & (r1 <= hi)
    in2 = ok & (r2 >= lo) & (r2 <= hi)
    d1 = np.where(in1, np.abs(r1 - seed), np.inf)
    d2 = np.where(in2, np.abs(r2 - seed), np.inf)
    y = np.where(d1 <= d2, r1, r2)
    y = np.where(np.isinf(np.minimum(d1, d2)), np.nan, y)
    return y


# ---------------------------------------------------------------------------
# RS point maps


def forward_map_rs(model, p1):
    """Map frame-1 points into frame-2 coordinates under an RS model.

    The destination scanline solves a quadratic whose root nearest the GS
    prediction y1 + flow_y is taken. Returns (N, 2); unmapped points are NaN.
    """
    rs, k = _rs_of(model)
    pts = np.atleast_2d(np.asarray(p1, dtype=float))
    Hs = _h_at(model, pts)
    f = _flow(Hs, pts)
    g = rs.gamma / rs.h
    s = 2.0 / (2.0 + k)
    y1 = pts[..., 1]
    fy = f[..., 1]
    b1 = beta1(k, y1, rs)
    A = 0.5 * s * k * g * g * fy
    B = s * g * (1.0 + k) * fy - 1.0
    C = y1 + (1.0 - b1) * fy
    y2 = _pick_root(A, B, C, y1 + fy, rs.h)
    bet = beta2(k, y2, rs) - b1
    x2 = pts[..., 0] + bet * f[..., 0]
    out = np.stack([x2, y2], axis=-1)
    out[np.isnan(y2)] = np.nan
    return out if np.asarray(p1).ndim > 1 else out[0]


def rectify_point(model, p, frame=1, extent=None):
    """Map observed RS points to their global-shutter positions.

    The observed scanline fixes the time fraction; the GS point x_g solves
    x_g + beta * flow(x_g) = p by Newton from the first-order seed. Points
    that do not converge, or wander past twice the frame diagonal, are NaN.
    """
    rs, k = _rs_of(model)
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    bv = beta1(k, pts[..., 1], rs) if frame == 1 else beta2(k, pts[..., 1], rs)
    bv = np.asarray(bv, dtype=float)

    Hs = _h_at(model, pts)
    xg = pts - bv[..., None] * _flow(Hs, pts)
    if extent is None:
        diag = 4.0 * rs.h  # order-of-magnitude runaway guard
    else:
        diag = float(np.hypot(extent[0], extent[1]))
    flat = xg.reshape(-1, 2)
    flat_p = pts.reshape(-1, 2)
    flat_b = bv.reshape(-1)
    seed_ok = np.isfinite(flat).all(axis=-1)
    idx = np.flatnonzero(seed_ok)
    flat[~seed_ok] = np.nan
    for _ in range(_MAX_ITERS):
        if idx.size == 0:
            break
        sub = flat[idx]
        bsub = flat_b[idx]
        Ha = _h_at(model, sub)
        F = sub + bsub[:, None] * _flow(Ha, sub) - flat_p[idx]
        J = np.eye(2) + bsub[:, None, None] * _flow_jac(Ha, sub)
        step = _solve2(J, F)
        sub = sub - np.nan_to_num(step, nan=0.0)
        bad = (
            ~np.isfinite(step).all(axis=-1)
            | (np.linalg.norm(sub - flat_p[idx], axis=-1) > 2.0 * diag)
        )
        sub[bad] = np.nan
        flat[idx] = sub
        done = np.abs(step).max(axis=-1) < _STEP_TOL
        idx = idx[~done & ~bad]
    flat[idx] = np.nan  # hit the iteration cap without converging
    xg = flat.reshape(xg.shape)
    return xg if np.asarray(p).ndim > 1 else xg[0]


def invrect_point(model, pg, frame=1):
    """Inverse of rectify_point: GS canvas points -> observed RS points.

    The observed scanline solves a closed-form quadratic (the flow is
    evaluated at the canvas point, so only the scanline is implicit).
    """
    rs, k = _rs_of(model)
    pts = np.atleast_2d(np.asarray(pg, dtype=float))
    Hs = _h_at(model, pts)
    f = _flow(Hs, pts)
    g = rs.gamma / rs.h
    s = 2.0 / (2.0 + k)
    yg = pts[..., 1]
    fy = f[..., 1]
    A = 0.5 * s * k * g * g * fy
    if frame == 1:
        B = s * g * fy - 1.0
        C = yg
        seed = yg + np.asarray(beta1(k, yg, rs)) * fy
    else:
        B = s * g * (1.0 + k) * fy - 1.0
        C = yg + fy
        seed = yg + fy
    y = _pick_root(A, B, C, seed, rs.h)
    bet = beta1(k, y, rs) if frame == 1 else beta2(k, y, rs)
    x = pts[..., 0] + bet * f[..., 0]
    out = np.stack([x, y], axis=-1)
    out[np.isnan(y)] = np.nan
    return out if np.asarray(pg).ndim > 1 else out[0]


def inverse_stitch_map(model, q):
    """Invert forward_map_rs: frame-2 coordinates -> frame-1 points.

    Newton on the forward map with a central-difference Jacobian, seeded
    from the first-order GS inverse q - flow(q).
    """
    qs = np.atleast_2d(np.asarray(q, dtype=float))
    p = qs - _flow(_h_at(model, qs), qs)
    flat = p.reshape(-1, 2)
    flat_q = qs.reshape(-1, 2)
    seed_ok = np.isfinite(flat).all(axis=-1)
    idx = np.flatnonzero(seed_ok)
    flat[~seed_ok] = np.nan
    eps = 1e-4
    ex = np.array([eps, 0.0])
    ey = np.array([0.0, eps])
    for _ in range(_MAX_ITERS):
        if idx.size == 0:
            break
        sub = flat[idx]
        F = forward_map_rs(model, sub) - flat_q[idx]
        Jx = (forward_map_rs(model, sub + ex) - forward_map_rs(model, sub - ex)) / (2 * eps)
        Jy = (forward_map_rs(model, sub + ey) - forward_map_rs(model, sub - ey)) / (2 * eps)
        J = np.stack([Jx, Jy], axis=-1)  # columns d/dx, d/dy
        Fj = np.concatenate([F, Jx, Jy], axis=-1)
        bad = ~np.isfinite(Fj).all(axis=-1)
        step = _solve2(J, np.nan_to_num(F, nan=0.0))
        bad |= ~np.isfinite(step).all(axis=-1)
        sub = sub - np.nan_to_num(step, nan=0.0)
        sub[bad] = np.nan
        flat[idx] = sub
        done = np.abs(np.nan_to_num(step, nan=np.inf)).max(axis=-1) < _STEP_TOL
        idx = idx[~done & ~bad]
    flat[idx] = np.nan
    p = flat.reshape(p.shape)
    return p if np.asarray(q).ndim > 1 else p[0]


# ---------------------------------------------------------------------------
# discrete (global-shutter) maps


def map_discrete(model, p):
    """Apply discrete homographies: p2 = dehomog(H [p;1]). NaN behind camera."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    Hs = _h_at(model, pts)
    xh = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)
    if Hs.ndim == 2:
        hx = xh @ Hs.T
    else:
        hx = np.einsum("...ij,...j->...i", Hs, xh)
    w = hx[..., 2]
    scale = np.abs(hx).max(axis=-1)
    bad = np.abs(w) <= 1e-12 * np.maximum(scale, 1e-300)
    w = np.where(bad, 1.0, w)
    out = hx[..., :2] / w[..., None]
    out[bad] = np.nan
    return out if np.asarray(p).ndim > 1 else out[0]


def inverse_discrete(model, q):
    """Invert a discrete map. Fields iterate the cell assignment (the cell
    is keyed by the source point) until it stabilizes."""
    qs = np.atleast_2d(np.asarray(q, dtype=float))
    if not isinstance(model, WarpField):
        Hi = np.linalg.inv(np.asarray(model, dtype=float))
        out = map_discrete(Hi, qs)
        return out if np.asarray(q).ndim > 1 else out[0]
    p = qs.copy()
    iy = ix = None
    for _ in range(5):
        jy, jx = model.cell_index(p)
        if iy is not None and np.array_equal(jy, iy) and np.array_equal(jx, ix):
            break
        iy, ix = jy, jx
        Hi = np.linalg.inv(model.cells[iy, ix])
        p = map_discrete(Hi, qs)  # stacked per-point matrices
    return p if np.asarray(q).ndim > 1 else p[0]


# ---------------------------------------------------------------------------
# raster plumbing


def bilinear_sample(img, pts):
    """Sample img at float (N,2) xy points. Returns (values, valid_mask);
    points with NaN coords or outside the pixel-center hull are invalid."""
    img = np.asarray(img, dtype=float)
    pts = np.asarray(pts, dtype=float)
    h, w = img.shape[:2]
    x, y = pts[..., 0], pts[..., 1]
    valid = (
        np.isfinite(x) & np.isfinite(y) & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    )
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2) if w > 1 else np.zeros_like(xs, int)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2) if h > 1 else np.zeros_like(ys, int)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    v00 = img[y0, x0]
    v01 = img[y0, np.minimum(x0 + 1, w - 1)]
    v10 = img[np.minimum(y0 + 1, h - 1), x0]
    v11 = img[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    vals = (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )
    return vals, valid


def feather_weights(mask):
    """Linear feathering weight: distance to the nearest invalid pixel."""
    if not mask.any():
        return np.zeros(mask.shape, dtype=float)
    return distance_transform_edt(mask)


def _to_gray(img):
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def overlap_diff(img_a, img_b, mask_a, mask_b):
    """Red/green discrepancy visualization over the overlap region.

    R = |gray difference|, G = 255 - |gray difference|, B = 0; pixels
    outside the overlap are black. Identical content renders pure green.
    """
    ga = _to_gray(img_a)
    gb = _to_gray(img_b)
    d = np.clip(np.abs(ga - gb), 0.0, 255.0)
    out = np.zeros(ga.shape + (3,), dtype=np.uint8)
    ov = mask_a & mask_b
    out[..., 0][ov] = np.rint(d[ov]).astype(np.uint8)
    out[..., 1][ov] = np.rint(255.0 - d[ov]).astype(np.uint8)
    return out


@dataclass
class Canvas:
    """Composited output: image, integer offset of pixel (0,0), per-source
    validity masks, an optional overlap discrepancy image, and the per-source
    grayscale resamplings (for overlap quality scoring)."""

    image: np.ndarray
    offset: tuple[int, int]
    masks: list = field(default_factory=list)
    diff: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    layers: list = field(default_factory=list)


def _boundary_ring(w, h, step=2.0):
    xs = np.arange(0.0, w - 1 + 1e-9, step)
    ys = np.arange(0.0, h - 1 + 1e-9, step)
    top = np.stack([xs, np.zeros_like(xs)], axis=-1)
    bot = np.stack([xs, np.full_like(xs, h - 1.0)], axis=-1)
    lef = np.stack([np.zeros_like(ys), ys], axis=-1)
    rig = np.stack([np.full_like(ys, w - 1.0), ys], axis=-1)
    corners = np.array([[w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0], [w - 1.0, h - 1.0]])
    return np.concatenate([top, bot, lef, rig, corners], axis=0)


_MAX_CANVAS = 16384


def _bounds_from(points_list, pad=2):
    pts = np.concatenate([np.atleast_2d(p) for p in points_list], axis=0)
    pts = pts[np.isfinite(pts).all(axis=-1)]
    if len(pts) == 0:
        raise ValueError("no finite boundary points; cannot size the canvas")
    x0 = int(np.floor(pts[:, 0].min())) - pad
    y0 = int(np.floor(pts[:, 1].min())) - pad
    x1 = int(np.ceil(pts[:, 0].max())) + pad
    y1 = int(np.ceil(pts[:, 1].max())) + pad
    wc, hc = x1 - x0 + 1, y1 - y0 + 1
    if wc > _MAX_CANVAS or hc > _MAX_CANVAS:
        raise ValueError(f"canvas {wc}x{hc} exceeds the {_MAX_CANVAS}px safety cap")
    return (x0, y0), (wc, hc)


def _canvas_points(offset, size):
    (x0, y0), (wc, hc) = offset, size
    gx, gy = np.meshgrid(np.arange(wc, dtype=float), np.arange(hc, dtype=float))
    return np.stack([gx + x0, gy + y0], axis=-1).reshape(-1, 2), (hc, wc)


def _composite(images, samples, masks, shape, blend):
    nch = max(im.ndim for im in images)
    out_shape = shape + (3,) if nch == 3 else shape
    acc = np.zeros(out_shape, dtype=float)
    wacc = np.zeros(shape, dtype=float)
    for img, vals, m in zip(images, samples, masks):
        w = feather_weights(m) if blend == "linear" else m.astype(float)
        v = vals.reshape(shape + vals.shape[1:]) if vals.ndim > 1 else vals.reshape(shape)
        if nch == 3 and v.ndim == 2:
            v = np.repeat(v[..., None], 3, axis=-1)
        acc += (w[..., None] if nch == 3 else w) * v
        wacc += w
    safe = np.where(wacc > 0, wacc, 1.0)
    img = acc / (safe[..., None] if nch == 3 else safe)
    img[wacc == 0] = 0.0
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _is_rs(model):
    return isinstance(model, RsDiffModel) or (
        isinstance(model, WarpField) and model.kind == "rs"
    )


def warp_and_stitch(img1, img2, model, mode="stitch", blend="linear"):
    """Composite two frames under a shared motion model.

    mode 'stitch' maps frame 1 into frame 2's pixel grid (RS differential
    models use the scanline-aware forward map; plain 3x3 arrays and 'gs'
    fields use the discrete map). mode 'rectify' puts both frames onto the
    global-shutter canvas of an RS model. blend 'linear' feathers by
    distance to each source's boundary; 'overwrite' prefers frame 1.
    """
    img1 = np.asarray(img1)
    img2 = np.asarray(img2)
    h1, w1 = img1.shape[:2]
    h2, w2 = img2.shape[:2]
    rs_model = _is_rs(model)
    ring1 = _boundary_ring(w1, h1)
    ring2 = _boundary_ring(w2, h2)

    if mode == "stitch":
        fwd1 = forward_map_rs(model, ring1) if rs_model else map_discrete(model, ring1)
        offset, size = _bounds_from([fwd1, ring2])
        q, shape = _canvas_points(offset, size)
        src1 = inverse_stitch_map(model, q) if rs_model else inverse_discrete(model, q)
        src2 = q
    elif mode == "rectify":
        if not rs_model:
            raise ValueError("rectify mode needs an RS model")
        b1 = rectify_point(model, ring1, frame=1, extent=(w1, h1))
        b2 = rectify_point(model, ring2, frame=2, extent=(w2, h2))
        offset, size = _bounds_from([b1, b2])
        q, shape = _canvas_points(offset, size)
        src1 = invrect_point(model, q, frame=1)
        src2 = invrect_point(model, q, frame=2)
    else:
        raise ValueError("mode must be 'stitch' or 'rectify'")

    v1, m1 = bilinear_sample(img1, src1)
    v2, m2 = bilinear_sample(img2, src2)
    m1g = m1.reshape(shape)
    m2g = m2.reshape(shape)
    meta = {"mode": mode, "blend": blend, "size": size}
    if not (m1g & m2g).any():
        meta["warning"] = "empty overlap: sources placed disjointly"
        warnings.warn(meta["warning"])
    image = _composite([img1, img2], [v1, v2], [m1g, m2g], shape, blend)

    gray1 = _to_gray(v1.reshape(shape + v1.shape[1:])) if v1.ndim > 1 else v1.reshape(shape)
    gray2 = _to_gray(v2.reshape(shape + v2.shape[1:])) if v2.ndim > 1 else v2.reshape(shape)
    diff = overlap_diff(gray1, gray2, m1g, m2g)
    return Canvas(image=image, offset=offset, masks=[m1g, m2g], diff=diff,
                  meta=meta, layers=[gray1, gray2])


def rectify_image(img, model, frame=1):
    """Resample one RS frame onto its global-shutter canvas.

    Canvas bounds come from rectifying the frame's boundary ring; each
    canvas pixel samples the source at its closed-form observed position.
    Returns a Canvas with a single mask.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    ring = _boundary_ring(w, h)
    bnd = rectify_point(model, ring, frame=frame, extent=(w, h))
    offset, size = _bounds_from([bnd])
    q, shape = _canvas_points(offset, size)
    src = invrect_point(model, q, frame=frame)
    vals, m = bilinear_sample(img, src)
    mg = m.reshape(shape)
    image = _composite([img], [vals], [mg], shape, blend="overwrite")
    return Canvas(image=image, offset=offset, masks=[mg], meta={"mode": "rectify-single"})


def chain_pairwise(frames, models, mode="stitch", blend="linear"):
    """Composite n frames through n-1 pairwise models onto the last frame.

    Model i maps frame i into frame i+1; compositions are exact function
    chains (no intermediate resampling). Mixed model types are not allowed.
    """
    frames = [np.asarray(f) for f in frames]
    if len(frames) != len(models) + 1:
        raise ValueError("need exactly one model per adjacent frame pair")
    if not models:
        img = frames[0]
        m = np.ones(img.shape[:2], dtype=bool)
        return Canvas(image=np.asarray(img, dtype=np.uint8), offset=(0, 0), masks=[m])
    rs_model = _is_rs(models[0])
    if any(_is_rs(m) != rs_model for m in models):
        raise ValueError("all pairwise models must share a type")

    def fwd_chain(i, pts):
        for m in models[i:]:
            pts = forward_map_rs(m, pts) if rs_model else map_discrete(m, pts)
        return pts

    def inv_chain(i, pts):
        for m in reversed(models[i:]):
            pts = inverse_stitch_map(m, pts) if rs_model else inverse_discrete(m, pts)
        return pts

    rings = []
    for i, f in enumerate(frames):
        h, w = f.shape[:2]
        rings.append(fwd_chain(i, _boundary_ring(w, h)))
    offset, size = _bounds_from(rings)
    q, shape = _canvas_points(offset, size)

    samples, masks = [], []
    for i, f in enumerate(frames):
        src = inv_chain(i, q)
        v, m = bilinear_sample(f, src)
        samples.append(v)
        masks.append(m.reshape(shape))
    image = _composite(frames, samples, masks, shape, blend)
    return Canvas(image=image, offset=offset, masks=masks, meta={"mode": mode, "blend": blend})


def save_png(path, array):
    """Write a uint8 grayscale or RGB array as PNG."""
    from PIL import Image

    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
