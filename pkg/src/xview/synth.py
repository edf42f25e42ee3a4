"""Synthetic KITTI-style frames: a raycast LIDAR scan plus calibration.

The scanner mimics a 64-beam spinning LIDAR over the camera's field of view:
rays hit a ground plane and a handful of box obstacles (cars, pedestrians,
poles, walls), so the resulting clouds have the usual structure — dense
ground rings, vertical surfaces, nothing in the sky.  Everything is
deterministic for a given seed.
"""

from __future__ import annotations

import numpy as np

from .calib import PointCloud, RawCalibration

SENSOR_HEIGHT = 1.73  # meters above ground
MAX_RANGE = 80.0
MIN_RANGE = 2.0


def synth_calibration(image_size: tuple[int, int] = (1280, 384)) -> RawCalibration:
    """KITTI-like calibration: rectified color camera, velodyne axis swap."""
    width, height = image_size
    fx = fy = 721.5377
    cx = width * 0.493
    cy = height * 0.461
    p2 = np.array(
        [
            [fx, 0.0, cx, 44.85728],
            [0.0, fy, cy, 0.2163791],
            [0.0, 0.0, 1.0, 0.002745884],
        ]
    )
    # small rectification rotation about an arbitrary axis (exactly orthonormal)
    angle = 0.008
    axis = np.array([0.267, 0.535, 0.802])
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    rect = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    velo_to_cam = np.array(
        [
            [0.0, -1.0, 0.0, -0.002],
            [0.0, 0.0, -1.0, -0.076],
            [1.0, 0.0, 0.0, -0.272],
        ]
    )
    return RawCalibration(
        cam_projection=p2, rect_rotation=rect, lidar_to_cam=velo_to_cam
    )


def _scene_boxes(rng: np.random.Generator) -> np.ndarray:
    """Axis-aligned obstacles as (n, 6) rows of x0, x1, y0, y1, z0, z1."""
    boxes = []
    ground = -SENSOR_HEIGHT
    for _ in range(rng.integers(5, 10)):  # traffic at mid/far range
        cx = rng.uniform(15.0, 58.0)
        cy = rng.uniform(-7.0, 7.0)
        l = rng.uniform(3.6, 4.6)
        w = rng.uniform(1.5, 1.8)
        boxes.append([cx - l / 2, cx + l / 2, cy - w / 2, cy + w / 2, ground, ground + 1.5])
    for _ in range(rng.integers(0, 3)):  # roadside pedestrians
        cx = rng.uniform(12.0, 40.0)
        cy = rng.uniform(-10.0, 10.0)
        boxes.append([cx - 0.3, cx + 0.3, cy - 0.3, cy + 0.3, ground, ground + 1.7])
    for _ in range(rng.integers(3, 7)):  # poles / signs
        cx = rng.uniform(10.0, 55.0)
        cy = rng.uniform(-14.0, 14.0)
        boxes.append([cx - 0.15, cx + 0.15, cy - 0.15, cy + 0.15, ground, ground + 5.0])
    for side in (-1.0, 1.0):  # guardrails / facades running the full depth
        y = side * rng.uniform(9.0, 16.0)
        boxes.append(
            [
                rng.uniform(4.0, 8.0),
                60.0 + rng.uniform(0.0, 15.0),
                y - 0.3,
                y + 0.3,
                ground,
                ground + rng.uniform(0.8, 6.0),
            ]
        )
    return np.array(boxes)


def _ray_box_hits(origins_dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Smallest positive hit distance per ray over all boxes (inf = miss)."""
    d = origins_dirs  # (m, 3), rays start at the sensor origin
    m = d.shape[0]
    best = np.full(m, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d  # inf on zero components is fine for the slab test
        for x0, x1, y0, y1, z0, z1 in boxes:
            tx0 = x0 * inv[:, 0]
            tx1 = x1 * inv[:, 0]
            ty0 = y0 * inv[:, 1]
            ty1 = y1 * inv[:, 1]
            tz0 = z0 * inv[:, 2]
            tz1 = z1 * inv[:, 2]
            tmin = np.maximum.reduce(
                [np.minimum(tx0, tx1), np.minimum(ty0, ty1), np.minimum(tz0, tz1)]
            )
            tmax = np.minimum.reduce(
                [np.maximum(tx0, tx1), np.maximum(ty0, ty1), np.maximum(tz0, tz1)]
            )
            hit = (tmax >= tmin) & (tmax > 0)
            t = np.where(tmin > 0, tmin, tmax)
            best = np.where(hit & (t > 0) & (t < best), t, best)
    return best


def _beam_elevations() -> np.ndarray:
    """64 beams in two blocks, denser on top, like the HDL-64E."""
    upper = np.linspace(2.0, -8.83, 32)
    lower = np.linspace(-8.83 - 0.5, -24.8, 32)
    return np.concatenate([upper, lower])


def synth_cloud(
    seed: int = 0,
    azimuth_step_deg: float = 0.35,  # 20 Hz spin rate
    fov_deg: float = 80.0,
) -> PointCloud:
    """Raycast one scan over the forward field of view."""
    rng = np.random.default_rng(seed)
    boxes = _scene_boxes(rng)

    elev = np.deg2rad(_beam_elevations())
    azim = np.deg2rad(
        np.arange(-fov_deg / 2.0, fov_deg / 2.0, azimuth_step_deg)
    )
    ee, aa = np.meshgrid(elev, azim, indexing="ij")
    ce = np.cos(ee).ravel()
    dirs = np.stack(
        [ce * np.cos(aa).ravel(), ce * np.sin(aa).ravel(), np.sin(ee).ravel()],
        axis=1,
    )

    with np.errstate(divide="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, -SENSOR_HEIGHT / dirs[:, 2], np.inf)
    t_boxes = _ray_box_hits(dirs, boxes)
    t = np.minimum(t_ground, t_boxes)
    hit = np.isfinite(t) & (t >= MIN_RANGE) & (t <= MAX_RANGE)

    t = t[hit] * (1.0 + rng.normal(0.0, 0.002, size=int(hit.sum())))
    pts = dirs[hit] * t[:, None]
    refl = np.where(
        t_boxes[hit] <= t_ground[hit],
        rng.uniform(0.3, 0.95, size=t.size),  # surfaces reflect brighter
        rng.uniform(0.05, 0.4, size=t.size),
    )
    cloud = np.column_stack([pts, refl]).astype(np.float32)
    return PointCloud(points=cloud)


def synth_frame(
    seed: int = 0, image_size: tuple[int, int] = (1280, 384)
) -> tuple[PointCloud, RawCalibration]:
    return synth_cloud(seed), synth_calibration(image_size)
