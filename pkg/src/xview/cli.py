"""Command-line driver: build pooling matrices, pool features, benchmark.

JSON results go to stdout, human-readable notes and errors to stderr.
Exit code is 0 exactly when no error occurred; failures print a
machine-readable ``error: <Code>: <message>`` line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bev as bev_mod
from . import detection, pooling, synth
from .calib import (
    parse_calibration,
    compose_chain,
    read_point_cloud,
    serialize_calibration,
    write_point_cloud,
)
from .errors import ChannelOutOfRange, ShapeMismatch, XviewError
from .views import BevSpec, FrontViewSpec


@dataclass
class FrameBundle:
    """One frame's inputs plus the geometry both views are built on."""

    cloud_path: Path
    calib_path: Path
    front: FrontViewSpec
    bev: BevSpec

    def load(self):
        cloud = read_point_cloud(self.cloud_path.read_bytes())
        calib = parse_calibration(self.calib_path.read_text())
        return cloud, compose_chain(calib)


def _parse_pair(text: str, what: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise SystemExit(f"error: BadFlag: {what} must look like 1280x384") from None


def _parse_bev_range(text: str) -> tuple[tuple[float, float], ...]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 6:
        raise SystemExit("error: BadFlag: --bev-range needs x0,x1,y0,y1,z0,z1")
    return (parts[0], parts[1]), (parts[2], parts[3]), (parts[4], parts[5])


def _bev_spec(args, stride: Optional[int] = None) -> BevSpec:
    x_range, y_range, z_range = _parse_bev_range(args.bev_range)
    return BevSpec(
        x_range=x_range,
        y_range=y_range,
        z_range=z_range,
        resolution=args.resolution,
        stride=stride if stride is not None else args.bev_stride,
    )


def _default_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("XVIEW_SEED", "0"))


def _emit(obj: dict):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _note(msg: str):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    seed = _default_seed(args)
    width, height = _parse_pair(args.image_size, "--image-size")
    cloud, calib = synth.synth_frame(seed, image_size=(width, height))
    Path(args.out_cloud).write_bytes(write_point_cloud(cloud))
    Path(args.out_calib).write_text(serialize_calibration(calib))
    _note(f"synthesized {len(cloud)} points (seed {seed})")
    _emit({"points": len(cloud), "cloud": args.out_cloud, "calib": args.out_calib})
    return 0


def cmd_build(args) -> int:
    width, height = _parse_pair(args.image_size, "--image-size")
    front = FrontViewSpec(width_px=width, height_px=height, stride=args.front_stride)
    bev = _bev_spec(args)
    bundle = FrameBundle(
        cloud_path=Path(args.cloud),
        calib_path=Path(args.calib),
        front=front,
        bev=bev,
    )
    cloud, chain = bundle.load()
    src, dst = (front, bev) if args.direction == "fv2bev" else (bev, front)
    matrix = pooling.build_pooling_matrix(
        cloud, chain, src, dst, kernel=args.kernel, frame_id=args.frame_id
    )
    Path(args.out).write_bytes(pooling.serialize_matrix(matrix))
    stats = pooling.coverage(matrix)
    if cloud.n_reflectance_clamped:
        _note(f"warning: clamped {cloud.n_reflectance_clamped} reflectance values")
    _note(
        f"wrote {args.out}: {matrix.nnz} nnz, "
        f"source {100 * stats.source_cells_used:.2f}% "
        f"target {100 * stats.target_cells_used:.2f}% of cells used"
    )
    _emit(
        {
            "out": args.out,
            "direction": matrix.direction,
            "kernel": args.kernel,
            "n_target": matrix.n_target,
            "n_source": matrix.n_source,
            **stats.as_dict(),
        }
    )
    return 0


def cmd_pool(args) -> int:
    matrix = pooling.deserialize_matrix(Path(args.matrix).read_bytes())
    grid = bev_mod.read_grid_bytes(Path(args.features).read_bytes())
    features = pooling.FeatureMap.from_grid(grid)
    pooled = pooling.apply_pooling(matrix, features, threads=args.threads)
    if args.out_shape:
        rows, cols = _parse_pair(args.out_shape, "--out-shape")
        if rows * cols != pooled.n_cells:
            raise ShapeMismatch(
                f"--out-shape {rows}x{cols} does not match {pooled.n_cells} target cells"
            )
    else:
        rows, cols = pooled.n_cells, 1
    Path(args.out).write_bytes(
        bev_mod.write_grid_bytes(pooled.to_grid(rows, cols))
    )
    _note(f"pooled {features.n_cells} -> {pooled.n_cells} cells, wrote {args.out}")
    _emit({"out": args.out, "rows": rows, "cols": cols, "channels": pooled.channels})
    return 0


_WORKLOADS = {
    # source cells, target cells, channels, nnz
    "conv4": (155 * 46, 75 * 75, 512, 20000),
    "raw": (1280 * 384, 600 * 600, 9, 20000),
}


def _time_op(fn, reps: int) -> dict:
    for _ in range(3):
        fn()  # warmup
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1000.0)
    return {
        "median_ms": float(np.median(samples)),
        "p95_ms": float(np.percentile(samples, 95)),
        "reps": reps,
    }


def cmd_bench(args) -> int:
    seed = _default_seed(args)
    rng = np.random.default_rng(seed)
    if args.workload == "custom":
        shape = (args.source_cells, args.target_cells, args.channels, args.nnz)
    else:
        shape = _WORKLOADS[args.workload]
    n_source, n_target, channels, nnz = shape

    matrix = pooling.random_pooling_matrix(n_target, n_source, nnz, rng)
    feats = pooling.FeatureMap(
        values=rng.random((n_source, channels), dtype=np.float32)
    )
    grad = pooling.FeatureMap(
        values=rng.random((n_target, channels), dtype=np.float32)
    )
    cloud, calib = synth.synth_frame(seed)
    chain = compose_chain(calib)
    front = FrontViewSpec(1280, 384, stride=1)
    bev = BevSpec(stride=1)

    report = {
        "workload": args.workload,
        "n_source": n_source,
        "n_target": n_target,
        "channels": channels,
        "nnz": matrix.nnz,
        "threads": args.threads,
        "ops": {
            "build": _time_op(
                lambda: pooling.build_pooling_matrix(cloud, chain, front, bev),
                args.reps,
            ),
            "apply": _time_op(
                lambda: pooling.apply_pooling(matrix, feats, threads=args.threads),
                args.reps,
            ),
            "apply_grad": _time_op(
                lambda: pooling.apply_pooling_grad(matrix, grad, threads=args.threads),
                args.reps,
            ),
        },
    }
    _note(
        "op          median     p95\n"
        + "\n".join(
            f"{name:<10} {op['median_ms']:7.2f}ms {op['p95_ms']:7.2f}ms"
            for name, op in report["ops"].items()
        )
    )
    _emit(report)
    return 0


def cmd_render(args) -> int:
    grid = bev_mod.read_grid_bytes(Path(args.input).read_bytes())
    rows, cols, channels = grid.shape
    if not 0 <= args.channel < channels:
        raise ChannelOutOfRange(
            f"channel {args.channel} outside 0..{channels - 1}"
        )
    plane = grid[:, :, args.channel].astype(np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        image = np.round((plane - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        image = np.zeros((rows, cols), dtype=np.uint8)
    header = f"P5\n{cols} {rows}\n255\n".encode()
    Path(args.out).write_bytes(header + image.tobytes())
    _note(f"rendered channel {args.channel} of {args.input} -> {args.out}")
    _emit({"out": args.out, "rows": rows, "cols": cols, "min": lo, "max": hi})
    return 0


def cmd_encode(args) -> int:
    cloud = read_point_cloud(Path(args.cloud).read_bytes())
    spec = _bev_spec(args)
    grid = bev_mod.encode_bev(cloud, spec, slices=args.slices)
    Path(args.out).write_bytes(bev_mod.write_grid_bytes(grid.values))
    _note(
        f"encoded {len(cloud)} points into {grid.values.shape[0]}x"
        f"{grid.values.shape[1]}x{grid.values.shape[2]} grid"
    )
    _emit({"out": args.out, "shape": list(grid.values.shape)})
    return 0


def cmd_label_stats(args) -> int:
    spec = _bev_spec(args)
    payload = json.loads(Path(args.boxes).read_text())
    gts = [detection.BevBox(**box) for box in payload["gts"]]
    sizes = [
        tuple(float(v) for v in part.split(","))
        for part in args.sizes.split(";")
    ]
    yaws = [float(v) for v in args.yaws.split(",")]
    anchors = detection.generate_anchors(spec, sizes=sizes, yaws=yaws)
    matches = detection.match_anchors(
        anchors, gts, pos_thresh=args.pos_thresh, neg_thresh=args.neg_thresh
    )
    counts = {"positive": 0, "negative": 0, "ignore": 0}
    for m in matches:
        counts[m.label] += 1
    _note(
        f"{len(anchors)} anchors vs {len(gts)} gts: "
        f"{counts['positive']} positive, {counts['ignore']} ignore"
    )
    _emit({"n_anchors": len(anchors), "n_gts": len(gts), **counts})
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_bev_flags(p: argparse.ArgumentParser):
    p.add_argument("--bev-range", default="0,60,-30,30,-2.5,1",
                   help="x0,x1,y0,y1,z0,z1 in meters")
    p.add_argument("--resolution", type=float, default=0.1)
    p.add_argument("--bev-stride", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xview",
        description="Sparse cross-view pooling between camera and LIDAR BEV",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic frame")
    p.add_argument("--out-cloud", required=True)
    p.add_argument("--out-calib", required=True)
    p.add_argument("--image-size", default="1280x384")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("build", help="build a pooling matrix for one frame")
    p.add_argument("--calib", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--direction", choices=["fv2bev", "bev2fv"], default="fv2bev")
    p.add_argument("--kernel", choices=["nearest", "bilinear"], default="nearest")
    p.add_argument("--image-size", default="1280x384")
    p.add_argument("--front-stride", type=int, default=1)
    _add_bev_flags(p)
    p.add_argument("--frame-id", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("pool", help="apply a matrix to a feature grid file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-shape", default=None, help="rows x cols of the output grid")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_pool)

    p = sub.add_parser("bench", help="time build/apply/grad on synthetic workloads")
    p.add_argument("--workload", choices=[*_WORKLOADS, "custom"], default="conv4")
    p.add_argument("--source-cells", type=int, default=7130)
    p.add_argument("--target-cells", type=int, default=5625)
    p.add_argument("--channels", type=int, default=512)
    p.add_argument("--nnz", type=int, default=20000)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("render", help="render one grid channel to a PGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("encode", help="rasterize a cloud into the BEV input grid")
    p.add_argument("--cloud", required=True)
    _add_bev_flags(p)
    p.add_argument("--slices", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("label-stats", help="anchor labeling statistics")
    p.add_argument("--boxes", required=True, help='JSON file with {"gts": [...]}')
    _add_bev_flags(p)
    p.add_argument("--sizes", default="1.0,0.6", help="l,w pairs separated by ;")
    p.add_argument("--yaws", default="0,1.5707963267948966")
    p.add_argument("--pos-thresh", type=float, default=0.5)
    p.add_argument("--neg-thresh", type=float, default=0.35)
    p.set_defaults(fn=cmd_label_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except XviewError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
