import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def golden_calib_text() -> str:
    return (DATA / "calib_golden.txt").read_text()


@pytest.fixture(scope="session")
def golden_velo_bytes() -> bytes:
    return (DATA / "velo_golden.bin").read_bytes()


@pytest.fixture(scope="session")
def synth_frame():
    from xview import compose_chain, synth

    cloud, calib = synth.synth_frame(seed=7)
    return cloud, compose_chain(calib)


def random_instance(rng: np.random.Generator, max_points=100, max_cells=32,
                    direction="fv2bev", kernel="nearest"):
    """A random small frame: specs, calibration chain, and a point cloud.

    The projection maps the BEV x/y box roughly onto the image so that a
    healthy share of points is visible in both views.
    """
    from xview.calib import CalibrationChain, PointCloud
    from xview.views import BevSpec, FrontViewSpec

    stride_f = int(rng.integers(1, 3))
    width = int(rng.integers(4, max_cells + 1)) * stride_f
    height = int(rng.integers(4, max_cells + 1)) * stride_f
    front = FrontViewSpec(width_px=width, height_px=height, stride=stride_f)

    stride_b = int(rng.integers(1, 3))
    res = float(rng.uniform(0.2, 1.5))
    nx = int(rng.integers(4, max_cells + 1))
    ny = int(rng.integers(4, max_cells + 1))
    x0 = float(rng.uniform(-5, 5))
    y0 = float(rng.uniform(-5, 5))
    bev = BevSpec(
        x_range=(x0, x0 + nx * res * stride_b),
        y_range=(y0, y0 + ny * res * stride_b),
        z_range=(-2.0, 2.0),
        resolution=res,
        stride=stride_b,
    )

    if rng.random() < 0.5:
        # orthographic-like: w constant, u/v affine in x/y
        su = width / (bev.x_range[1] - bev.x_range[0])
        sv = height / (bev.y_range[1] - bev.y_range[0])
        P = np.array(
            [
                [su, 0.0, 0.0, -su * bev.x_range[0]],
                [0.0, sv, 0.0, -sv * bev.y_range[0]],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
    else:
        # perspective in z with depth offset keeping w positive
        su = width / (bev.x_range[1] - bev.x_range[0])
        sv = height / (bev.y_range[1] - bev.y_range[0])
        P = np.array(
            [
                [2.0 * su, 0.0, 0.0, -2.0 * su * bev.x_range[0]],
                [0.0, 2.0 * sv, 0.0, -2.0 * sv * bev.y_range[0]],
                [0.0, 0.0, 0.1, 2.0],
            ]
        )
    chain = CalibrationChain(P=P)

    n = int(rng.integers(0, max_points + 1))
    pts = np.column_stack(
        [
            rng.uniform(bev.x_range[0] - 1, bev.x_range[1] + 1, n),
            rng.uniform(bev.y_range[0] - 1, bev.y_range[1] + 1, n),
            rng.uniform(-2.5, 2.5, n),
            rng.uniform(0, 1, n),
        ]
    ).astype(np.float32)
    cloud = PointCloud(points=pts)

    src, dst = (front, bev) if direction == "fv2bev" else (bev, front)
    return cloud, chain, src, dst, kernel
