"""Sparse non-homogeneous pooling between front view and BEV.

A point cloud pairs cells of the two views: a LIDAR point visible in both
views links its target cell (matrix row) to its source cell (column).  The
resulting row-normalized sparse matrix M turns pooling into one sparse-dense
product B = M F, and its transpose is the exact gradient of that product.

Construction is fully deterministic: entries are canonically sorted by
(row, col, weight), duplicate cells merged by ordered summation, and rows
normalized in float64 before the weights are rounded to float32.  Two
independent implementations following these steps produce byte-identical
serialized matrices.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calib import CalibrationChain, PointCloud
from .errors import BadMagic, ChecksumMismatch, ShapeMismatch, Truncated, ViewMismatch
from .views import (
    BevSpec,
    FrontViewSpec,
    ViewSpec,
    bev_cells,
    front_cells,
    project_points,
)

MATRIX_MAGIC = b"SNHP"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sHBQQQ")  # magic, version, direction, n_target, n_source, nnz
_DIRECTIONS = ("fv2bev", "bev2fv")


@dataclass(frozen=True)
class FeatureMap:
    """Dense (n_cells, channels) float32 feature matrix for one view."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.values.dtype != np.float32:
            object.__setattr__(self, "values", self.values.astype(np.float32))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature map contains non-finite values")

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "FeatureMap":
        """Flatten an (H, W, C) grid row-major into (H*W, C)."""
        if grid.ndim != 3:
            raise ValueError(f"grid must be 3-D, got shape {grid.shape}")
        h, w, c = grid.shape
        return cls(values=np.ascontiguousarray(grid, dtype=np.float32).reshape(h * w, c))

    def to_grid(self, rows: int, cols: int) -> np.ndarray:
        if rows * cols != self.n_cells:
            raise ShapeMismatch(
                f"{rows}x{cols} does not match {self.n_cells} cells"
            )
        return self.values.reshape(rows, cols, self.channels)


@dataclass(frozen=True)
class Provenance:
    source_spec: ViewSpec
    target_spec: ViewSpec
    frame_id: Optional[str]
    points_in_view: int  # points visible in at least one of the two views


@dataclass(frozen=True)
class CoverageStats:
    source_cells_used: float
    target_cells_used: float
    points_in_view: int
    nnz: int

    def as_dict(self) -> dict:
        return {
            "source_cells_used": self.source_cells_used,
            "target_cells_used": self.target_cells_used,
            "points_in_view": self.points_in_view,
            "nnz": self.nnz,
        }


class PoolingMatrix:
    """Row-normalized CSR matrix mapping source cells to target cells.

    Immutable after construction; safe to share across threads.  Rows are
    canonically sorted with unique (row, col) entries.
    """

    def __init__(
        self,
        n_target: int,
        n_source: int,
        row_offsets: np.ndarray,
        col_indices: np.ndarray,
        weights: np.ndarray,
        direction: str,
        provenance: Optional[Provenance] = None,
    ):
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}")
        self.n_target = int(n_target)
        self.n_source = int(n_source)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.uint32)
        self.weights = np.ascontiguousarray(weights, dtype=np.float32)
        self.direction = direction
        self.provenance = provenance
        self._validate()
        self._cols64 = self.col_indices.astype(np.int64)
        self._transpose = None  # built lazily on first gradient apply

    def _validate(self):
        if self.row_offsets.shape != (self.n_target + 1,):
            raise ValueError("row_offsets must have n_target + 1 entries")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.col_indices.size:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if self.col_indices.size != self.weights.size:
            raise ValueError("col_indices and weights must have equal length")
        if self.col_indices.size and int(self.col_indices.max()) >= self.n_source:
            raise ValueError("col_indices out of range")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive and finite")
        sums = np.zeros(self.n_target, dtype=np.float64)
        np.add.at(sums, self._expanded_rows(), self.weights.astype(np.float64))
        nonempty = np.diff(self.row_offsets) > 0
        if not np.allclose(sums[nonempty], 1.0, rtol=0.0, atol=1e-6):
            raise ValueError("nonempty rows must sum to 1 within 1e-6")

    def _expanded_rows(self) -> np.ndarray:
        return np.repeat(
            np.arange(self.n_target, dtype=np.int64), np.diff(self.row_offsets)
        )

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoolingMatrix):
            return NotImplemented
        return (
            self.n_target == other.n_target
            and self.n_source == other.n_source
            and self.direction == other.direction
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        return (
            f"PoolingMatrix({self.direction}, {self.n_target}x{self.n_source}, "
            f"nnz={self.nnz})"
        )


# ---------------------------------------------------------------------------
# construction

def _canonical_csr(
    t: np.ndarray, s: np.ndarray, w: np.ndarray, n_target: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort triplets by (row, col, weight), merge duplicates, row-normalize.

    Sorting includes the weight so that per-group summation order does not
    depend on point order; all sums are ordered float64 folds.
    """
    if t.size == 0:
        return (
            np.zeros(n_target + 1, dtype=np.int64),
            np.zeros(0, dtype=np.uint32),
            np.zeros(0, dtype=np.float32),
        )
    order = np.lexsort((w, s, t))
    t, s, w = t[order], s[order], w[order]

    first = np.empty(t.size, dtype=bool)
    first[0] = True
    first[1:] = (t[1:] != t[:-1]) | (s[1:] != s[:-1])
    gid = np.cumsum(first) - 1
    merged_t = t[first]
    merged_s = s[first]
    merged_w = np.zeros(merged_t.size, dtype=np.float64)
    np.add.at(merged_w, gid, w)

    row_sum = np.zeros(n_target, dtype=np.float64)
    np.add.at(row_sum, merged_t, merged_w)
    weights = (merged_w / row_sum[merged_t]).astype(np.float32)

    counts = np.bincount(merged_t, minlength=n_target)
    row_offsets = np.zeros(n_target + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    return row_offsets, merged_s.astype(np.uint32), weights


def _bilinear_neighbors(
    mrow: np.ndarray, mcol: np.ndarray, n_rows: int, n_cols: int, base: np.ndarray
):
    """Yield (flat_cell, weight, valid) for the 4 cells around continuous
    map coordinates; cell centers sit at integer + 0.5."""
    ar = mrow - 0.5
    ac = mcol - 0.5
    r0 = np.floor(ar)
    c0 = np.floor(ac)
    fr = ar - r0
    fc = ac - c0
    wr0 = 1.0 - fr
    wc0 = 1.0 - fc
    r1 = r0 + 1.0
    c1 = c0 + 1.0
    for rr, cc, ww in (
        (r0, c0, wr0 * wc0),
        (r0, c1, wr0 * fc),
        (r1, c0, fr * wc0),
        (r1, c1, fr * fc),
    ):
        with np.errstate(invalid="ignore"):
            ok = (
                base
                & (rr >= 0)
                & (rr < n_rows)
                & (cc >= 0)
                & (cc < n_cols)
                & (ww > 0.0)
            )
        flat = (
            np.where(ok, rr, 0.0).astype(np.int64) * n_cols
            + np.where(ok, cc, 0.0).astype(np.int64)
        )
        yield flat, ww, ok


def build_pooling_matrix(
    cloud: PointCloud,
    chain: CalibrationChain,
    src: ViewSpec,
    dst: ViewSpec,
    kernel: str = "nearest",
    frame_id: Optional[str] = None,
) -> PoolingMatrix:
    """Build the per-frame pooling matrix from point correspondences.

    Exactly one of src/dst must be a front view and the other a BEV.  A point
    contributes only when visible in both views.  ``nearest`` links the one
    source cell the point falls in; ``bilinear`` spreads it over the 4 source
    cells around its continuous map position.  Rows are normalized to sum 1.
    """
    if kernel not in ("nearest", "bilinear"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if isinstance(src, FrontViewSpec) and isinstance(dst, BevSpec):
        direction, front, bev = "fv2bev", src, dst
    elif isinstance(src, BevSpec) and isinstance(dst, FrontViewSpec):
        direction, front, bev = "bev2fv", dst, src
    else:
        raise ViewMismatch("src and dst must be one front-view and one BEV spec")

    n_target, n_source = dst.n_cells, src.n_cells

    xyz = cloud.xyz.astype(np.float64)
    u, v, w = project_points(chain, xyz)
    f_rows, f_cols, f_ok = front_cells(front, u, v)
    f_ok = f_ok & (w > 0.0)
    b_rows, b_cols, b_ok = bev_cells(bev, xyz)

    paired = f_ok & b_ok
    points_in_view = int(np.count_nonzero(f_ok | b_ok))

    f_flat = f_rows * front.map_width + f_cols
    b_flat = b_rows * bev.map_width + b_cols
    t_flat = b_flat if direction == "fv2bev" else f_flat

    if kernel == "nearest":
        s_flat = f_flat if direction == "fv2bev" else b_flat
        t_ent = t_flat[paired]
        s_ent = s_flat[paired]
        w_ent = np.ones(t_ent.size, dtype=np.float64)
    else:
        # continuous pre-binning coordinates of the source view
        if direction == "fv2bev":
            mcol = u / float(front.stride)
            mrow = v / float(front.stride)
            n_rows, n_cols = front.map_height, front.map_width
        else:
            mrow = ((xyz[:, 0] - bev.x_range[0]) / bev.resolution) / float(bev.stride)
            mcol = ((xyz[:, 1] - bev.y_range[0]) / bev.resolution) / float(bev.stride)
            n_rows, n_cols = bev.map_length, bev.map_width
        parts_t, parts_s, parts_w = [], [], []
        for flat, ww, ok in _bilinear_neighbors(mrow, mcol, n_rows, n_cols, paired):
            parts_t.append(t_flat[ok])
            parts_s.append(flat[ok])
            parts_w.append(ww[ok])
        t_ent = np.concatenate(parts_t)
        s_ent = np.concatenate(parts_s)
        w_ent = np.concatenate(parts_w)

    row_offsets, col_indices, weights = _canonical_csr(t_ent, s_ent, w_ent, n_target)
    return PoolingMatrix(
        n_target=n_target,
        n_source=n_source,
        row_offsets=row_offsets,
        col_indices=col_indices,
        weights=weights,
        direction=direction,
        provenance=Provenance(
            source_spec=src,
            target_spec=dst,
            frame_id=frame_id,
            points_in_view=points_in_view,
        ),
    )


# ---------------------------------------------------------------------------
# forward / gradient

def _csr_spmm(
    offsets: np.ndarray, entry_cells: np.ndarray, entry_w: np.ndarray, values: np.ndarray
) -> np.ndarray:
    """Segmented product: out[r] = sum over the row's entries of w * values[cell].

    Rows are processed in groups of equal entry count, so each group is one
    batched gather-multiply-reduce with float64 accumulation.  Results are
    deterministic and independent of how rows are partitioned.
    """
    lengths = np.diff(offsets)
    out = np.zeros((offsets.size - 1, values.shape[1]), dtype=np.float32)
    for length in np.unique(lengths):
        if length == 0:
            continue
        rows_sel = np.flatnonzero(lengths == length)
        ent = offsets[rows_sel][:, None] + np.arange(length, dtype=np.int64)[None, :]
        gathered = values[entry_cells[ent]] * entry_w[ent][:, :, None]
        out[rows_sel] = gathered.sum(axis=1, dtype=np.float64).astype(np.float32)
    return out


def _parallel_blocks(n_rows: int, threads: int, block_fn) -> np.ndarray:
    bounds = np.linspace(0, n_rows, threads + 1, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda i: block_fn(int(bounds[i]), int(bounds[i + 1])), range(threads))
        )
    return np.concatenate(parts, axis=0)


def apply_pooling(matrix: PoolingMatrix, features: FeatureMap, threads: int = 1) -> FeatureMap:
    """Pooled map B = M F; output has matrix.n_target cells.

    Rows are independent, so any thread partition gives identical results.
    """
    if features.n_cells != matrix.n_source:
        raise ShapeMismatch(
            f"feature map has {features.n_cells} cells, matrix expects {matrix.n_source}"
        )

    def block(r0: int, r1: int) -> np.ndarray:
        return _csr_spmm(
            matrix.row_offsets[r0 : r1 + 1], matrix._cols64, matrix.weights, features.values
        )

    if threads > 1 and matrix.n_target >= 2 * threads:
        out = _parallel_blocks(matrix.n_target, threads, block)
    else:
        out = block(0, matrix.n_target)
    return FeatureMap(values=out)


def _transpose_cache(matrix: PoolingMatrix):
    """Entries regrouped by source cell: CSR of the transposed matrix."""
    if matrix._transpose is None:
        rows_ent = matrix._expanded_rows()
        perm = np.lexsort((rows_ent, matrix._cols64))
        counts = np.bincount(matrix._cols64, minlength=matrix.n_source)
        t_offsets = np.zeros(matrix.n_source + 1, dtype=np.int64)
        np.cumsum(counts, out=t_offsets[1:])
        matrix._transpose = (t_offsets, rows_ent[perm], matrix.weights[perm])
    return matrix._transpose


def apply_pooling_grad(matrix: PoolingMatrix, grad: FeatureMap, threads: int = 1) -> FeatureMap:
    """Adjoint map Mᵀ G: gradient of B = M F with respect to F."""
    if grad.n_cells != matrix.n_target:
        raise ShapeMismatch(
            f"gradient map has {grad.n_cells} cells, matrix expects {matrix.n_target}"
        )
    t_offsets, t_rows, t_weights = _transpose_cache(matrix)

    def block(c0: int, c1: int) -> np.ndarray:
        return _csr_spmm(t_offsets[c0 : c1 + 1], t_rows, t_weights, grad.values)

    if threads > 1 and matrix.n_source >= 2 * threads:
        out = _parallel_blocks(matrix.n_source, threads, block)
    else:
        out = block(0, matrix.n_source)
    return FeatureMap(values=out)


# ---------------------------------------------------------------------------
# statistics

def coverage(matrix: PoolingMatrix) -> CoverageStats:
    """Fraction of source columns and target rows that carry any weight."""
    used_cols = int(np.unique(matrix.col_indices).size)
    used_rows = int(np.count_nonzero(np.diff(matrix.row_offsets) > 0))
    points = matrix.provenance.points_in_view if matrix.provenance else 0
    return CoverageStats(
        source_cells_used=used_cols / matrix.n_source if matrix.n_source else 0.0,
        target_cells_used=used_rows / matrix.n_target if matrix.n_target else 0.0,
        points_in_view=points,
        nnz=matrix.nnz,
    )


# ---------------------------------------------------------------------------
# serialization ("SNHP" format, little-endian, CRC32 trailer)

def serialize_matrix(matrix: PoolingMatrix) -> bytes:
    header = _MATRIX_HEADER.pack(
        MATRIX_MAGIC,
        MATRIX_VERSION,
        _DIRECTIONS.index(matrix.direction),
        matrix.n_target,
        matrix.n_source,
        matrix.nnz,
    )
    body = (
        matrix.row_offsets.astype("<u8").tobytes()
        + matrix.col_indices.astype("<u4").tobytes()
        + matrix.weights.astype("<f4").tobytes()
    )
    crc = zlib.crc32(header + body) & 0xFFFFFFFF
    return header + body + struct.pack("<I", crc)


def deserialize_matrix(blob: bytes) -> PoolingMatrix:
    if len(blob) < _MATRIX_HEADER.size + 4:
        raise Truncated("matrix blob shorter than header")
    magic, version, dir_byte, n_target, n_source, nnz = _MATRIX_HEADER.unpack_from(blob, 0)
    if magic != MATRIX_MAGIC:
        raise BadMagic(f"expected {MATRIX_MAGIC!r}, got {magic!r}")
    if version != MATRIX_VERSION:
        raise BadMagic(f"unsupported matrix version {version}")
    if dir_byte >= len(_DIRECTIONS):
        raise Truncated(f"invalid direction byte {dir_byte}")
    expected = _MATRIX_HEADER.size + (n_target + 1) * 8 + nnz * 4 + nnz * 4 + 4
    if len(blob) != expected:
        raise Truncated(f"matrix blob is {len(blob)} bytes, expected {expected}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumMismatch(
            f"CRC32 mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    off = _MATRIX_HEADER.size
    row_offsets = np.frombuffer(blob, dtype="<u8", count=n_target + 1, offset=off)
    off += (n_target + 1) * 8
    col_indices = np.frombuffer(blob, dtype="<u4", count=nnz, offset=off)
    off += nnz * 4
    weights = np.frombuffer(blob, dtype="<f4", count=nnz, offset=off)
    return PoolingMatrix(
        n_target=n_target,
        n_source=n_source,
        row_offsets=row_offsets.astype(np.int64),
        col_indices=col_indices,
        weights=weights,
        direction=_DIRECTIONS[dir_byte],
    )


# ---------------------------------------------------------------------------
# synthetic matrices (benchmarks, tests)

def random_pooling_matrix(
    n_target: int,
    n_source: int,
    nnz: int,
    rng: np.random.Generator,
    direction: str = "fv2bev",
) -> PoolingMatrix:
    """Random row-normalized matrix with roughly the requested nnz."""
    t = rng.integers(0, n_target, size=nnz, dtype=np.int64)
    s = rng.integers(0, n_source, size=nnz, dtype=np.int64)
    w = rng.uniform(0.1, 1.0, size=nnz)
    row_offsets, col_indices, weights = _canonical_csr(t, s, w, n_target)
    return PoolingMatrix(
        n_target=n_target,
        n_source=n_source,
        row_offsets=row_offsets,
        col_indices=col_indices,
        weights=weights,
        direction=direction,
    )
