"""Hand-crafted BEV input encoding and the feature-grid binary format.

The encoder rasterizes a point cloud into a ``rows x cols x (2 + slices)``
grid: one density channel, one max-intensity channel, and a max-height
channel per vertical slice.  All reductions are per-cell max or count, so
the result does not depend on point order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .calib import PointCloud
from .errors import BadMagic, Truncated
from .views import BevSpec, bev_cells

GRID_MAGIC = b"SNHG"
_GRID_HEADER = struct.Struct("<4sHIII")  # magic, version, rows, cols, channels
GRID_VERSION = 1


@dataclass(frozen=True)
class BevFeatureGrid:
    spec: BevSpec
    values: np.ndarray  # (rows, cols, 2 + slices) float32

    @property
    def n_slices(self) -> int:
        return self.values.shape[2] - 2

    @property
    def density(self) -> np.ndarray:
        return self.values[:, :, 0]

    @property
    def max_intensity(self) -> np.ndarray:
        return self.values[:, :, 1]

    @property
    def slice_heights(self) -> np.ndarray:
        return self.values[:, :, 2:]


def encode_bev(
    cloud: PointCloud,
    spec: BevSpec,
    slices: int = 7,
    density_cap: int = 8,
) -> BevFeatureGrid:
    """Rasterize a point cloud into the multi-channel BEV grid.

    Per cell: density = min(1, n/density_cap); max reflectance; and for each
    vertical slice the max point height above the slice bottom, normalized by
    the slice thickness (empty cells and slices stay 0).
    """
    if slices < 1:
        raise ValueError("slices must be >= 1")
    if density_cap < 1:
        raise ValueError("density_cap must be >= 1")

    rows_n, cols_n = spec.shape
    values = np.zeros((rows_n, cols_n, 2 + slices), dtype=np.float32)
    if len(cloud) == 0:
        return BevFeatureGrid(spec=spec, values=values)

    rows, cols, valid = bev_cells(spec, cloud.xyz)
    if not np.any(valid):
        return BevFeatureGrid(spec=spec, values=values)

    flat = (rows[valid] * cols_n + cols[valid]).astype(np.int64)
    refl = cloud.reflectance[valid].astype(np.float64)
    z = cloud.xyz[valid, 2].astype(np.float64)

    counts = np.zeros(rows_n * cols_n, dtype=np.int64)
    np.add.at(counts, flat, 1)
    density = np.minimum(1.0, counts / float(density_cap))
    values[:, :, 0] = density.reshape(rows_n, cols_n).astype(np.float32)

    intensity = np.zeros(rows_n * cols_n, dtype=np.float64)
    np.maximum.at(intensity, flat, refl)
    values[:, :, 1] = intensity.reshape(rows_n, cols_n).astype(np.float32)

    z0, z1 = spec.z_range
    thickness = (z1 - z0) / slices
    slice_idx = np.floor((z - z0) / thickness).astype(np.int64)
    np.clip(slice_idx, 0, slices - 1, out=slice_idx)  # guards the z1-epsilon edge
    rel_height = (z - (z0 + slice_idx * thickness)) / thickness

    heights = np.zeros(rows_n * cols_n * slices, dtype=np.float64)
    np.maximum.at(heights, flat * slices + slice_idx, rel_height)
    values[:, :, 2:] = heights.reshape(rows_n, cols_n, slices).astype(np.float32)

    return BevFeatureGrid(spec=spec, values=values)


# ---------------------------------------------------------------------------
# feature-grid binary format (shared with the CLI and the frontend bindings)

def write_grid_bytes(values: np.ndarray) -> bytes:
    """Serialize a (rows, cols, channels) float32 grid."""
    if values.ndim != 3:
        raise ValueError(f"grid must be 3-dimensional, got shape {values.shape}")
    rows, cols, channels = values.shape
    header = _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, rows, cols, channels)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return header + payload


def read_grid_bytes(blob: bytes) -> np.ndarray:
    """Parse a grid blob back into a (rows, cols, channels) float32 array."""
    if len(blob) < _GRID_HEADER.size:
        raise Truncated("grid blob shorter than header")
    magic, version, rows, cols, channels = _GRID_HEADER.unpack_from(blob, 0)
    if magic != GRID_MAGIC:
        raise BadMagic(f"expected {GRID_MAGIC!r}, got {magic!r}")
    if version != GRID_VERSION:
        raise BadMagic(f"unsupported grid version {version}")
    expected = _GRID_HEADER.size + rows * cols * channels * 4
    if len(blob) != expected:
        raise Truncated(f"grid blob is {len(blob)} bytes, expected {expected}")
    payload = np.frombuffer(blob, dtype="<f4", offset=_GRID_HEADER.size)
    return payload.reshape(rows, cols, channels).copy()
