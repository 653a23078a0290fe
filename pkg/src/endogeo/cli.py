"""Command-line entry point.

Results print to stdout as ``key=value`` lines (floats via ``repr`` so the
same inputs always produce the same bytes).  Exit codes: 0 success, 1 for a
domain failure (message on stderr), 2 for usage errors (argparse default).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .core import (
    DOMAIN_ERRORS,
    CameraIntrinsics,
    LossWeights,
    SdfGridSpec,
    default_intrinsics,
)
from .geometry import depth_to_cloud
from .io import (
    read_depth_pfm,
    read_rgb_ppm,
    write_cloud_ply,
    write_depth_pfm,
    write_pfm_grid,
)
from .losses import GRAD_CHECK_LOSSES, LossConfig, auto_grid_spec, grad_check, loss_total
from .metrics import compute_metrics
from .refine import ABLATION_CASES, RefineConfig, refine_depth, run_ablation
from .sdf import SpatialIndex, sample_grid, sdf_field
from .core import PointCloud, validate_depth_map
from .synth import PRESETS, DatasetConfig, generate_dataset

__all__ = ["main", "build_parser"]


def _emit(key: str, value) -> None:
    # shortest round-trip repr for floats; numpy scalars coerced first
    if isinstance(value, (float, np.floating)):
        print(f"{key}={float(value)!r}")
    elif isinstance(value, np.integer):
        print(f"{key}={int(value)}")
    else:
        print(f"{key}={value}")


def _add_intrinsics_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fx", type=float, default=None, help="focal length x (default max(W,H)/2)")
    p.add_argument("--fy", type=float, default=None, help="focal length y (default max(W,H)/2)")
    p.add_argument("--cx", type=float, default=None, help="principal point x (default (W-1)/2)")
    p.add_argument("--cy", type=float, default=None, help="principal point y (default (H-1)/2)")


def _intrinsics_for(args, width: int, height: int) -> CameraIntrinsics:
    base = default_intrinsics(width, height)
    return CameraIntrinsics(
        fx=args.fx if args.fx is not None else base.fx,
        fy=args.fy if args.fy is not None else base.fy,
        cx=args.cx if args.cx is not None else base.cx,
        cy=args.cy if args.cy is not None else base.cy,
    )


def _parse_grid(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be RX,RY,RZ, got {text!r}")
    try:
        rx, ry, rz = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must hold integers, got {text!r}")
    return rx, ry, rz


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"size must be H,W, got {text!r}")
    try:
        h, w = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must hold integers, got {text!r}")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endogeo",
        description="Geometry-aware depth toolkit: synthesis, losses, metrics, refinement.",
    )
    parser.add_argument("--version", action="version", version=f"endogeo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic RGB-D dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--preset",
        action="append",
        choices=sorted(PRESETS),
        default=None,
        help="repeatable; defaults to all presets cycled",
    )
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=320)

    p = sub.add_parser("loss", help="evaluate all loss terms between two depth maps")
    p.add_argument("--pred", required=True, help="predicted depth PFM")
    p.add_argument("--gt", required=True, help="ground-truth depth PFM")
    p.add_argument("--image", required=True, help="reference PPM for the smoothness term")
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=0.5)
    p.add_argument("--lambda3", type=float, default=0.1)
    p.add_argument("--grid", type=_parse_grid, default=(16, 16, 16), help="SDF grid RX,RY,RZ")
    p.add_argument("--grad-out", default=None, help="write the total-loss gradient as a raw PFM")
    _add_intrinsics_args(p)

    p = sub.add_parser("eval", help="depth metrics between two maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--median-scale", action="store_true", help="rescale pred by median ratio first")

    p = sub.add_parser("refine", help="optimise a corrupted copy of a depth map back toward it")
    p.add_argument("--gt", required=True, help="ground-truth depth PFM")
    p.add_argument("--image", required=True, help="reference PPM")
    p.add_argument("--case", choices=[c[-1] for c in ABLATION_CASES], default="4")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--grid", type=_parse_grid, default=(16, 16, 16))
    p.add_argument("--out", default=None, help="write the refined depth PFM here")
    p.add_argument("--trace", default=None, help="write the iteration trace CSV here")
    _add_intrinsics_args(p)

    p = sub.add_parser("ablate", help="run the four-case loss ablation over rendered fixtures")
    p.add_argument("--fixtures", required=True, help="directory holding a synth manifest")
    p.add_argument("--seeds", type=int, default=5, help="number of fixtures/seeds to use")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--grid", type=_parse_grid, default=(16, 16, 16))

    p = sub.add_parser("gradcheck", help="compare analytic loss gradients to finite differences")
    p.add_argument("--loss", required=True, choices=GRAD_CHECK_LOSSES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_parse_size, default=(8, 8), help="fixture H,W")
    p.add_argument("--grid", type=_parse_grid, default=(8, 8, 8))

    p = sub.add_parser("sdf", help="sample the signed-distance field of a depth map")
    p.add_argument("--depth", required=True, help="depth PFM")
    p.add_argument("--grid", type=_parse_grid, default=(16, 16, 16))
    p.add_argument("--out", default=None, help="write included sample points as ascii PLY")
    _add_intrinsics_args(p)

    p = sub.add_parser("cloud", help="back-project a depth map to an ascii PLY cloud")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    _add_intrinsics_args(p)

    return parser


def _cmd_synth(args) -> None:
    presets = tuple(args.preset) if args.preset else tuple(sorted(PRESETS))
    cfg = DatasetConfig(
        count=args.count,
        presets=presets,
        seed=args.seed,
        width=args.width,
        height=args.height,
    )
    manifest = generate_dataset(cfg, args.out)
    _emit("manifest", manifest)
    _emit("frames", args.count)


def _cmd_loss(args) -> None:
    pred = validate_depth_map(read_depth_pfm(args.pred))
    gt = validate_depth_map(read_depth_pfm(args.gt))
    image = read_rgb_ppm(args.image)
    cam = _intrinsics_for(args, gt.width, gt.height)
    weights = LossWeights(args.lambda1, args.lambda2, args.lambda3)
    spec = (
        auto_grid_spec(depth_to_cloud(gt, cam), args.grid)
        if weights.lambda3 > 0.0
        else "auto"
    )
    bd = loss_total(pred, gt, image, cam, LossConfig(weights=weights, sdf_spec=spec))
    for key, value in bd.as_dict().items():
        _emit(key, value)
    if args.grad_out:
        write_pfm_grid(bd.gradient, args.grad_out)
        _emit("grad_out", args.grad_out)


def _cmd_eval(args) -> None:
    pred = validate_depth_map(read_depth_pfm(args.pred))
    gt = validate_depth_map(read_depth_pfm(args.gt))
    report = compute_metrics(pred, gt, apply_median_scaling=args.median_scale)
    for key, value in report.as_dict().items():
        _emit(key, value)


def _cmd_refine(args) -> None:
    gt = validate_depth_map(read_depth_pfm(args.gt))
    image = read_rgb_ppm(args.image)
    cam = _intrinsics_for(args, gt.width, gt.height)
    spec = auto_grid_spec(depth_to_cloud(gt, cam), args.grid)
    cfg = RefineConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        noise_sigma=args.noise_sigma,
        ablation_case=f"case{args.case}",
        seed=args.seed,
        sdf_spec=spec,
    )
    final, trace = refine_depth(gt, image, cam, cfg)
    first = trace.reports[0]
    last = trace.reports[-1]
    _emit("initial_rmse", first.rmse)
    _emit("final_rmse", last.rmse)
    _emit("initial_total", trace.totals[0])
    _emit("final_total", trace.totals[-1])
    _emit("iterations", args.iters)
    if args.out:
        write_depth_pfm(final, args.out)
        _emit("out", args.out)
    if args.trace:
        with open(args.trace, "w", encoding="ascii") as f:
            f.write("\n".join(trace.csv_rows()) + "\n")
        _emit("trace", args.trace)


def _cmd_ablate(args) -> None:
    import os

    from .synth import _parse_manifest

    manifest = os.path.join(args.fixtures, "manifest.txt")
    info = _parse_manifest(manifest)
    if len(info["frames"]) < args.seeds:
        raise ValueError(
            f"need {args.seeds} fixtures, manifest lists {len(info['frames'])}"
        )
    fx, fy, cx, cy = info["intrinsics"]
    cam = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
    fixtures = []
    for fr in info["frames"][: args.seeds]:
        gt = validate_depth_map(
            read_depth_pfm(os.path.join(args.fixtures, fr["depth"]))
        )
        image = read_rgb_ppm(os.path.join(args.fixtures, fr["rgb"]))
        fixtures.append((gt, image))
    spec = auto_grid_spec(depth_to_cloud(fixtures[0][0], cam), args.grid)
    cfg = RefineConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        noise_sigma=args.noise_sigma,
        seed=args.base_seed,
        sdf_spec="auto",
    )
    result = run_ablation(fixtures, cam, cfg)
    table = result.mean_table()
    for case in ABLATION_CASES:
        for metric, value in table[case].items():
            _emit(f"{case}.{metric}", value)
        rmses = result.rmse_per_fixture(case)
        _emit(f"{case}.rmse_per_fixture", ",".join(repr(v) for v in rmses))


def _cmd_gradcheck(args) -> None:
    from .core import DepthMap, RgbImage, seeded_rng

    rng = seeded_rng(args.seed)
    h, w = args.size
    gt = DepthMap(rng.uniforms(h * w, 1.0, 3.0).reshape(h, w))
    pred = DepthMap(rng.uniforms(h * w, 1.0, 3.0).reshape(h, w))
    image = RgbImage(rng.uniforms(h * w * 3).reshape(h, w, 3))
    cam = default_intrinsics(w, h)
    spec = auto_grid_spec(depth_to_cloud(gt, cam), args.grid)
    err = grad_check(
        args.loss, pred, gt=gt, image=image, cam=cam, spec=spec, seed=args.seed
    )
    _emit("loss", args.loss)
    _emit("max_rel_error", err)


def _cmd_sdf(args) -> None:
    depth = validate_depth_map(read_depth_pfm(args.depth))
    cam = _intrinsics_for(args, depth.width, depth.height)
    cloud = depth_to_cloud(depth, cam)
    spec = auto_grid_spec(cloud, args.grid)
    grid = sample_grid(spec)
    values, included = sdf_field(grid, depth, cam, SpatialIndex(cloud))
    inc = values[included]
    _emit("samples", grid.shape[0])
    _emit("included", int(included.sum()))
    _emit("excluded", int((~included).sum()))
    _emit("min", float(inc.min()))
    _emit("max", float(inc.max()))
    _emit("mean_abs", float(np.abs(inc).mean()))
    if args.out:
        write_cloud_ply(PointCloud(grid[included]), args.out)
        _emit("out", args.out)


def _cmd_cloud(args) -> None:
    depth = validate_depth_map(read_depth_pfm(args.depth))
    cam = _intrinsics_for(args, depth.width, depth.height)
    cloud = depth_to_cloud(depth, cam)
    write_cloud_ply(cloud, args.out)
    _emit("points", len(cloud))
    _emit("out", args.out)


_COMMANDS = {
    "synth": _cmd_synth,
    "loss": _cmd_loss,
    "eval": _cmd_eval,
    "refine": _cmd_refine,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
    "sdf": _cmd_sdf,
    "cloud": _cmd_cloud,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except DOMAIN_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
