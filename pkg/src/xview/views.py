"""View geometries and point-to-cell binning for front view and BEV.

Both views are half-open grids: a coordinate on the max boundary falls
outside.  Binning is floor-based, computed as "fine bin, then integer divide
by stride" so that coarser strides partition the finer grid exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .calib import CalibrationChain


class CellIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class FrontViewSpec:
    """Geometry of a camera-plane feature map (raw pixels or downsampled)."""

    width_px: int
    height_px: int
    stride: int = 1

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1 or self.stride < 1:
            raise ValueError("width_px, height_px and stride must be >= 1")

    @property
    def map_width(self) -> int:
        return -(-self.width_px // self.stride)  # ceil division

    @property
    def map_height(self) -> int:
        return -(-self.height_px // self.stride)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.map_height, self.map_width)

    @property
    def n_cells(self) -> int:
        return self.map_height * self.map_width

    def flat_index(self, cell: CellIndex) -> int:
        return cell.row * self.map_width + cell.col


@dataclass(frozen=True)
class BevSpec:
    """Geometry of a bird's-eye-view grid over the LIDAR ground plane.

    Rows run along x (forward, ego vehicle at row 0), columns along y (left).
    The effective cell size is ``resolution * stride`` meters.
    """

    x_range: tuple[float, float] = (0.0, 60.0)
    y_range: tuple[float, float] = (-30.0, 30.0)
    z_range: tuple[float, float] = (-2.5, 1.0)
    resolution: float = 0.1
    stride: int = 1

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if not hi > lo:
                raise ValueError("range max must exceed min on every axis")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def map_length(self) -> int:
        """Rows (x axis)."""
        return math.ceil(
            (self.x_range[1] - self.x_range[0]) / (self.resolution * self.stride)
        )

    @property
    def map_width(self) -> int:
        """Columns (y axis)."""
        return math.ceil(
            (self.y_range[1] - self.y_range[0]) / (self.resolution * self.stride)
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.map_length, self.map_width)

    @property
    def n_cells(self) -> int:
        return self.map_length * self.map_width

    def flat_index(self, cell: CellIndex) -> int:
        return cell.row * self.map_width + cell.col


ViewSpec = Union[FrontViewSpec, BevSpec]


# ---------------------------------------------------------------------------
# vectorized kernels (used by the pooling builder and the BEV encoder)

def project_points(
    chain: CalibrationChain, xyz: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (N, 3) LIDAR points to pixel coordinates.

    Returns float64 arrays (u, v, w).  Only entries with w > 0 are valid
    projections; u and v are unreliable elsewhere.  The expression is kept
    as explicit elementwise arithmetic so results are reproducible
    independent of BLAS.
    """
    P = chain.P
    x = np.asarray(xyz[:, 0], dtype=np.float64)
    y = np.asarray(xyz[:, 1], dtype=np.float64)
    z = np.asarray(xyz[:, 2], dtype=np.float64)
    uw = P[0, 0] * x + P[0, 1] * y + P[0, 2] * z + P[0, 3]
    vw = P[1, 0] * x + P[1, 1] * y + P[1, 2] * z + P[1, 3]
    w = P[2, 0] * x + P[2, 1] * y + P[2, 2] * z + P[2, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = uw / w
        v = vw / w
    return u, v, w


def front_cells(
    spec: FrontViewSpec, u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bin pixel coordinates into feature-map cells.

    Returns (rows, cols, valid); rows/cols are int64 and meaningful only
    where valid.  NaN coordinates compare false and come out invalid.
    """
    with np.errstate(invalid="ignore"):
        valid = (u >= 0.0) & (u < spec.width_px) & (v >= 0.0) & (v < spec.height_px)
        cols_f = np.floor(np.floor(u) / spec.stride)
        rows_f = np.floor(np.floor(v) / spec.stride)
    valid &= (rows_f >= 0) & (rows_f < spec.map_height)
    valid &= (cols_f >= 0) & (cols_f < spec.map_width)
    rows = np.where(valid, rows_f, 0.0).astype(np.int64)
    cols = np.where(valid, cols_f, 0.0).astype(np.int64)
    return rows, cols, valid


def bev_cells(
    spec: BevSpec, xyz: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bin LIDAR points into BEV cells; same conventions as front_cells."""
    x = np.asarray(xyz[:, 0], dtype=np.float64)
    y = np.asarray(xyz[:, 1], dtype=np.float64)
    z = np.asarray(xyz[:, 2], dtype=np.float64)
    (x0, x1), (y0, y1), (z0, z1) = spec.x_range, spec.y_range, spec.z_range
    valid = (x >= x0) & (x < x1) & (y >= y0) & (y < y1) & (z >= z0) & (z < z1)
    fine_r = np.floor((x - x0) / spec.resolution)
    fine_c = np.floor((y - y0) / spec.resolution)
    rows_f = np.floor(fine_r / spec.stride)
    cols_f = np.floor(fine_c / spec.stride)
    valid &= (rows_f >= 0) & (rows_f < spec.map_length)
    valid &= (cols_f >= 0) & (cols_f < spec.map_width)
    rows = np.where(valid, rows_f, 0.0).astype(np.int64)
    cols = np.where(valid, cols_f, 0.0).astype(np.int64)
    return rows, cols, valid


# ---------------------------------------------------------------------------
# scalar API

def project_point(
    chain: CalibrationChain, point
) -> Optional[tuple[float, float, float]]:
    """Project one 3D point; returns (u, v, w) or None when behind the camera."""
    xyz = np.asarray(point, dtype=np.float64).reshape(1, 3)
    u, v, w = project_points(chain, xyz)
    if w[0] <= 0.0:
        return None
    return float(u[0]), float(v[0]), float(w[0])


def front_cell(spec: FrontViewSpec, u: float, v: float) -> Optional[CellIndex]:
    """Cell containing pixel (u, v), or None if outside the image."""
    rows, cols, valid = front_cells(
        spec, np.array([u], dtype=np.float64), np.array([v], dtype=np.float64)
    )
    if not valid[0]:
        return None
    return CellIndex(int(rows[0]), int(cols[0]))


def bev_cell(spec: BevSpec, point) -> Optional[CellIndex]:
    """Cell containing a LIDAR point, or None if outside the BEV volume."""
    xyz = np.asarray(point, dtype=np.float64).reshape(1, 3)
    rows, cols, valid = bev_cells(spec, xyz)
    if not valid[0]:
        return None
    return CellIndex(int(rows[0]), int(cols[0]))
