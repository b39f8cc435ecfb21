"""Batch command-line frontend.

Subcommands:
  solve    estimate a motion model from a correspondence file, emit JSON
  stitch   composite two frames under an estimated model (five modes)
  rectify  resample one rolling-shutter frame onto its global-shutter canvas
  bench    run a sweep spec (TOML), write CSV, evaluate trend checks
  eval     standalone metrics: overlap score of two images, or a residual CDF

Correspondence file format: '#' starts a comment anywhere; the first data
line is the header `width height gamma [pair_id]`; every following data line
is `x1 y1 x2 y2` in pixels. Points must stay inside the declared dims plus a
10% margin and no flow may exceed the image diagonal; violations raise a
line-numbered error.

All commands are deterministic given (inputs, flags, seed): JSON is written
with sorted keys, CSV uses a pinned float format, and PNG output is computed
from integer arrays only. Commands never modify their inputs.

The environment variable RSSTITCH_THREADS requests a thread cap for the
numeric runtime. It is applied best-effort (exported as the standard
threadpool hints before the first numeric import in this process); invalid
values are ignored. The active request is recorded in every JSON report.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings


def _cap_threads():
    val = os.environ.get("RSSTITCH_THREADS", "").strip()
    if not val or not val.isdigit() or int(val) < 1:
        return None
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(var, val)
    return int(val)


_THREAD_CAP = _cap_threads()

import numpy as np  # noqa: E402  (thread hints must be exported first)

from .bench import (  # noqa: E402
    eval_cdf,
    evaluate_checks,
    load_sweep_spec,
    rmse_ncc,
    rows_to_csv,
    run_sweep,
)
from .core import CorrSet, RsDiffModel, RsParams  # noqa: E402
from .errors import (  # noqa: E402
    CorrespondenceFileError,
    RsStitchError,
    UndefinedMetricError,
)
from .render import rectify_image, save_png, warp_and_stitch  # noqa: E402
from .robust import (  # noqa: E402
    SOLVER_IDS,
    RansacParams,
    RobustEstimate,
    ransac,
    refit_consensus,
    residual_gs_disc,
    residual_rs,
)
from .solvers import DEFAULT_K_RANGE  # noqa: E402
from .warpfield import WeightParams, build_apap_field  # noqa: E402

__all__ = ["main", "read_corr_file", "write_corr_file"]

_STITCH_MODES = ("gs", "apap", "rs", "rs-apap", "rs-apap-rectify")


# ---------------------------------------------------------------------------
# correspondence files


def read_corr_file(path):
    """Parse a correspondence file into (CorrSet, header dict).

    Header: `width height gamma [pair_id]`. Rows: `x1 y1 x2 y2`. Every
    violation is reported with its 1-based line number.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CorrespondenceFileError(f"{path}: {exc.strerror or exc}") from exc
    header = None
    p1, u = [], []
    for ln, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        toks = text.split()
        if header is None:
            if len(toks) not in (3, 4):
                raise CorrespondenceFileError(
                    f"{path}:{ln}: header must be 'width height gamma [pair_id]',"
                    f" got {len(toks)} fields"
                )
            try:
                w, h, g = float(toks[0]), float(toks[1]), float(toks[2])
            except ValueError:
                raise CorrespondenceFileError(
                    f"{path}:{ln}: header fields must be numeric"
                ) from None
            if not (w > 0 and h > 0 and w == int(w) and h == int(h)):
                raise CorrespondenceFileError(
                    f"{path}:{ln}: image dims must be positive integers, got {toks[0]} {toks[1]}"
                )
            if not (0.0 <= g <= 1.0):
                raise CorrespondenceFileError(
                    f"{path}:{ln}: gamma must be in [0, 1], got {g:g}"
                )
            header = {
                "width": int(w),
                "height": int(h),
                "gamma": g,
                "pair_id": toks[3] if len(toks) == 4 else None,
            }
            continue
        if len(toks) != 4:
            raise CorrespondenceFileError(
                f"{path}:{ln}: expected 4 fields 'x1 y1 x2 y2', got {len(toks)}"
            )
        try:
            x1, y1, x2, y2 = (float(t) for t in toks)
        except ValueError:
            raise CorrespondenceFileError(
                f"{path}:{ln}: non-numeric coordinate"
            ) from None
        if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
            raise CorrespondenceFileError(f"{path}:{ln}: non-finite coordinate")
        W, H = header["width"], header["height"]
        for x, y in ((x1, y1), (x2, y2)):
            if not (-0.1 * W <= x <= 1.1 * W and -0.1 * H <= y <= 1.1 * H):
                raise CorrespondenceFileError(
                    f"{path}:{ln}: point ({x:g}, {y:g}) outside the declared"
                    f" {W}x{H} image plus 10% margin"
                )
        cap = math.hypot(W, H)
        if math.hypot(x2 - x1, y2 - y1) > cap:
            raise CorrespondenceFileError(
                f"{path}:{ln}: flow longer than the image diagonal ({cap:.1f} px)"
            )
        p1.append((x1, y1))
        u.append((x2 - x1, y2 - y1))
    if header is None:
        raise CorrespondenceFileError(f"{path}: no header line found")
    if not p1:
        raise CorrespondenceFileError(f"{path}: no correspondence rows")
    cs = CorrSet(np.asarray(p1, dtype=float), np.asarray(u, dtype=float))
    return cs, header


def write_corr_file(path, cs, width, height, gamma, pair_id=None, comment=None):
    """Inverse of read_corr_file, for generating files programmatically."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        head = f"{int(width)} {int(height)} {gamma:g}"
        if pair_id is not None:
            head += f" {pair_id}"
        fh.write(head + "\n")
        p2 = cs.p2
        for (x1, y1), (x2, y2) in zip(cs.p1, p2):
            fh.write(f"{x1:.6f} {y1:.6f} {x2:.6f} {y2:.6f}\n")


# ---------------------------------------------------------------------------
# shared plumbing


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _dump_json(report, out_path):
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_image(path):
    from PIL import Image

    with Image.open(path) as im:
        im.load()
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im)


def _residual_cdf(res, n=9):
    """Decile sample of the empirical residual CDF: [[level, value], ...]."""
    pts = eval_cdf(res)
    out = []
    for i in range(1, n + 1):
        level = i / (n + 1)
        idx = min(int(np.ceil(level * len(pts))) - 1, len(pts) - 1)
        out.append([round(level, 6), pts[max(idx, 0)][0]])
    return out


def _effective_gamma(args, header):
    g = header["gamma"] if args.gamma is None else args.gamma
    if not (0.0 <= g <= 1.0):
        raise CorrespondenceFileError(f"gamma must be in [0, 1], got {g:g}")
    return g


def _estimate(cs, header, solver, args):
    """RANSAC + optional consensus refit. Returns (model, estimate, rs)."""
    gamma = _effective_gamma(args, header)
    rs = RsParams(gamma=gamma, h=float(header["height"]))
    family, min_n, overrides = SOLVER_IDS[solver]
    need = max(min_n, overrides.get("sample_size", min_n))
    if len(cs) < need:
        raise CorrespondenceFileError(
            f"solver {solver} needs at least {need} correspondences, got {len(cs)}"
        )
    if family == "rs-constacc" and float(np.abs(cs.u).max(initial=0.0)) < 1e-12:
        # Zero observed motion: the acceleration is unidentifiable and the
        # 5-point system is degenerate; the exact model is "no flow".
        model = RsDiffModel(np.zeros((3, 3)), 0.0, rs)
        est = RobustEstimate(
            model=model,
            inlier_indices=np.arange(len(cs)),
            residuals=np.zeros(len(cs)),
            stats={"solver": solver, "note": "zero-motion shortcut (k fixed to 0)"},
        )
        return model, est, rs
    params = RansacParams(
        trials=args.trials,
        threshold=args.threshold,
        seed=args.seed,
        k_range=tuple(args.k_range),
    )
    est = ransac(cs, solver, params, rs=rs)
    model = est.model
    if getattr(args, "refit", True):
        model = refit_consensus(cs, est, solver, rs=rs)
    return model, est, rs


def _model_report(model, est, cs, threshold):
    if isinstance(model, RsDiffModel):
        res = residual_rs(model, cs)
        matrix = model.h_mat
        extra = {"k": model.k, "family": "rs-differential"}
    else:
        res = residual_gs_disc(model, cs)
        matrix = np.asarray(model, dtype=float)
        extra = {"family": "gs-discrete"}
    inl = int((res <= threshold).sum())
    report = {
        "matrix": matrix,
        "inliers": {"count": inl, "of": len(cs), "threshold_px": threshold},
        "residuals_px": {
            "mean": float(res.mean()),
            "median": float(np.median(res)),
            "max": float(res.max()),
            "cdf": _residual_cdf(res),
        },
        "ransac": est.stats,
    }
    report.update(extra)
    return report


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    cs, header = read_corr_file(args.corr)
    model, est, rs = _estimate(cs, header, args.solver, args)
    report = _model_report(model, est, cs, args.threshold)
    report.update(
        {
            "solver": args.solver,
            "gamma": rs.gamma,
            "image_size": [header["width"], header["height"]],
            "pair_id": header["pair_id"],
            "seed": args.seed,
            "refit": bool(args.refit),
            "threads": _THREAD_CAP,
        }
    )
    _dump_json(report, args.out)
    return 0


def _weight_params(args, extent):
    wp = WeightParams.for_extent(extent, cell=args.cell, tau=args.tau)
    if args.sigma is not None:
        wp = WeightParams(sigma=args.sigma, tau=args.tau, cell=args.cell)
    return wp


def cmd_stitch(args):
    img1 = _load_image(args.img1)
    img2 = _load_image(args.img2)
    cs, header = read_corr_file(args.corr)
    mode = args.mode
    solver = "gs-disc" if mode in ("gs", "apap") else "rs-constacc"
    model, est, rs = _estimate(cs, header, solver, args)

    extent = (img1.shape[1], img1.shape[0])
    field_meta = None
    if mode in ("apap", "rs-apap", "rs-apap-rectify"):
        inl = cs.subset(est.inlier_indices)
        wp = _weight_params(args, extent)
        if mode == "apap":
            fld = build_apap_field(inl, "gs", wp, extent)
        else:
            fld = build_apap_field(inl, "rs", wp, extent, rs=rs, k=model.k)
        warp_model = fld
        field_meta = {
            "cells": list(fld.cells.shape[:2]),
            "sigma": wp.sigma,
            "tau": wp.tau,
            "cell_px": wp.cell,
            "fallback_cells": len(fld.provenance.get("fallback_cells", [])),
        }
    else:
        warp_model = model

    canvas_mode = "rectify" if mode == "rs-apap-rectify" else "stitch"
    canvas = warp_and_stitch(img1, img2, warp_model, mode=canvas_mode, blend=args.blend)

    metrics = {}
    overlap = canvas.masks[0] & canvas.masks[1]
    try:
        metrics["rmse_ncc"] = rmse_ncc(canvas.layers[0], canvas.layers[1], mask=overlap)
    except UndefinedMetricError as exc:
        metrics["rmse_ncc"] = None
        metrics["note"] = str(exc)
    metrics["overlap_px"] = int(overlap.sum())

    out = args.out
    save_png(out + ".png", canvas.image)
    save_png(out + "_diff.png", canvas.diff)
    report = _model_report(model, est, cs, args.threshold)
    report.update(
        {
            "mode": mode,
            "solver": solver,
            "gamma": rs.gamma,
            "blend": args.blend,
            "canvas": {"offset": list(canvas.offset), "size": list(canvas.image.shape[:2][::-1])},
            "field": field_meta,
            "metrics": metrics,
            "outputs": [out + ".png", out + "_diff.png"],
            "seed": args.seed,
            "warning": canvas.meta.get("warning"),
            "threads": _THREAD_CAP,
        }
    )
    _dump_json(report, out + ".json")
    return 0


def cmd_rectify(args):
    img = _load_image(args.img)
    cs, header = read_corr_file(args.corr)
    gamma = _effective_gamma(args, header)
    note = None
    solver = "rs-constacc"
    if gamma == 0.0:
        # beta1 == 0 on every scanline: resampling is the identity and the
        # acceleration is unobservable, so fit the constant-velocity family.
        note = "gamma=0: every scanline shares the frame pose, rectification is a no-op"
        warnings.warn(note)
        solver = "rs-constvel"
    model, est, rs = _estimate(cs, header, solver, args)
    canvas = rectify_image(img, model, frame=args.frame)
    out = args.out
    save_png(out + ".png", canvas.image)
    save_png(out + "_mask.png", canvas.masks[0].astype(np.uint8) * 255)
    report = _model_report(model, est, cs, args.threshold)
    report.update(
        {
            "gamma": gamma,
            "frame": args.frame,
            "canvas": {"offset": list(canvas.offset), "size": list(canvas.image.shape[:2][::-1])},
            "outputs": [out + ".png", out + "_mask.png"],
            "seed": args.seed,
            "warning": note,
            "threads": _THREAD_CAP,
        }
    )
    _dump_json(report, out + ".json")
    return 0


def _bundled_spec(name):
    from importlib import resources

    ref = resources.files("rsstitch") / "specs" / f"{name}.toml"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled spec named {name!r}")
    return ref


def cmd_bench(args):
    if args.builtin:
        from importlib import resources

        with resources.as_file(_bundled_spec(args.builtin)) as p:
            spec, checks = load_sweep_spec(p)
    else:
        if not args.spec:
            raise SystemExit("bench needs a spec file or --builtin NAME")
        spec, checks = load_sweep_spec(args.spec)
    rows = run_sweep(spec)
    csv_text = rows_to_csv(rows, spec)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(f"wrote {args.out} ({len(rows)} rows)")
    failed = 0
    for label, ok, detail in evaluate_checks(rows, checks):
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {label}: {detail}")
        failed += 0 if ok else 1
    if args.plot_data:
        series = {}
        for r in rows:
            series.setdefault(r["solver"], []).append(
                [r["sweep_value"], r["mean_err_px"]]
            )
        _dump_json(series, args.plot_data)
    return 1 if failed else 0


def cmd_eval_ncc(args):
    a = _load_image(args.img_a)
    b = _load_image(args.img_b)
    if a.shape[:2] != b.shape[:2]:
        raise SystemExit(
            f"images must share a shape, got {a.shape[:2]} vs {b.shape[:2]}"
        )
    mask = None
    if args.mask:
        mask = _load_image(args.mask)
        if mask.ndim == 3:
            mask = mask[..., 0]
        mask = mask > 127
    score = rmse_ncc(a, b, mask=mask)
    _dump_json({"rmse_ncc": score}, args.out)
    return 0


def cmd_eval_cdf(args):
    vals = []
    with open(args.values, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                vals.append(float(text))
            except ValueError:
                raise SystemExit(f"{args.values}:{ln}: not a number: {text!r}") from None
    pts = eval_cdf(vals)
    _dump_json({"cdf": pts, "n": len(vals)}, args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_model_flags(p, with_refit=True):
    p.add_argument("--gamma", type=float, default=None,
                   help="readout ratio in [0,1]; overrides the file header (default: header value)")
    p.add_argument("--trials", type=int, default=1000, help="RANSAC trial count")
    p.add_argument("--threshold", type=float, default=1.0,
                   help="inlier residual threshold in pixels")
    p.add_argument("--seed", type=int, default=0, help="RANSAC stream seed")
    p.add_argument("--k-range", type=float, nargs=2, default=list(DEFAULT_K_RANGE),
                   metavar=("LO", "HI"), help="admissible acceleration interval")
    if with_refit:
        p.add_argument("--no-refit", dest="refit", action="store_false",
                       help="skip the consensus least-squares refit")


def _add_weight_flags(p):
    p.add_argument("--sigma", type=float, default=None,
                   help="weight kernel scale in px (default: 0.1 x image diagonal)")
    p.add_argument("--tau", type=float, default=0.0025,
                   help="weight floor in (0,1]; 1 collapses to the global model")
    p.add_argument("--cell", type=int, default=40, help="grid cell size in px")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="rsstitch",
        description="Rolling-shutter-aware homography estimation, stitching, and rectification.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="estimate a model from a correspondence file")
    p.add_argument("corr", help="correspondence file")
    p.add_argument("--solver", default="rs-constacc", choices=sorted(SOLVER_IDS),
                   help="estimator family")
    _add_model_flags(p)
    p.add_argument("--out", default="-", help="report path ('-' for stdout)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("stitch", help="composite two frames under an estimated model")
    p.add_argument("img1")
    p.add_argument("img2")
    p.add_argument("corr", help="correspondence file (frame1 -> frame2)")
    p.add_argument("--mode", default="rs", choices=_STITCH_MODES)
    p.add_argument("--blend", default="linear", choices=("linear", "overwrite"))
    _add_model_flags(p)
    _add_weight_flags(p)
    p.add_argument("--out", default="stitched", help="output prefix")
    p.set_defaults(fn=cmd_stitch)

    p = sub.add_parser("rectify", help="resample one RS frame onto its GS canvas")
    p.add_argument("img")
    p.add_argument("corr", help="correspondences to the next frame")
    p.add_argument("--frame", type=int, default=1, choices=(1, 2),
                   help="which side of the pair the image is")
    _add_model_flags(p)
    p.add_argument("--out", default="rectified", help="output prefix")
    p.set_defaults(fn=cmd_rectify)

    p = sub.add_parser("bench", help="run a sweep spec and evaluate its checks")
    p.add_argument("spec", nargs="?", help="TOML sweep spec")
    p.add_argument("--builtin", default=None,
                   help="name of a bundled spec (e.g. fig3a) instead of a file")
    p.add_argument("--out", default="sweep.csv", help="CSV output path")
    p.add_argument("--plot-data", default=None, help="optional JSON series dump")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval", help="standalone metrics")
    esub = p.add_subparsers(dest="metric", required=True)
    q = esub.add_parser("ncc", help="windowed-correlation RMSE of two images")
    q.add_argument("img_a")
    q.add_argument("img_b")
    q.add_argument("--mask", default=None, help="PNG mask (>127 = scored)")
    q.add_argument("--out", default="-")
    q.set_defaults(fn=cmd_eval_ncc)
    q = esub.add_parser("cdf", help="empirical CDF of a list of residuals")
    q.add_argument("values", help="text file, one number per line")
    q.add_argument("--out", default="-")
    q.set_defaults(fn=cmd_eval_cdf)

    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (RsStitchError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
