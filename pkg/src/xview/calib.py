"""KITTI calibration and velodyne point-cloud I/O.

Parses the per-frame calibration text (``P2``, ``R0_rect``, ``Tr_velo_to_cam``)
and composes the full LIDAR-to-image projection chain.  Velodyne scans are the
usual packed little-endian float32 ``(x, y, z, reflectance)`` records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MalformedNumber,
    MissingKey,
    NonFiniteValue,
    TruncatedRecord,
    WrongArity,
)

# key -> expected float count; R_rect is an accepted alias for R0_rect
_REQUIRED = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
_RECT_ALIASES = ("R0_rect", "R_rect")


@dataclass(frozen=True)
class RawCalibration:
    """The three calibration matrices read verbatim from a KITTI file."""

    cam_projection: np.ndarray   # (3, 4) camera 2 projection
    rect_rotation: np.ndarray    # (3, 3) rectifying rotation
    lidar_to_cam: np.ndarray     # (3, 4) velodyne -> camera frame

    def __post_init__(self):
        for name, mat, shape in (
            ("cam_projection", self.cam_projection, (3, 4)),
            ("rect_rotation", self.rect_rotation, (3, 3)),
            ("lidar_to_cam", self.lidar_to_cam, (3, 4)),
        ):
            if mat.shape != shape:
                raise ValueError(f"{name} must be {shape}, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise NonFiniteValue(f"{name} contains non-finite entries")
        # KITTI files are rounded to ~12 decimals, so allow 1e-3 slack
        r = self.rect_rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-3):
            raise ValueError("rect_rotation is not orthonormal within 1e-3")


@dataclass(frozen=True)
class CalibrationChain:
    """Composed 3x4 projection from homogeneous LIDAR coords to pixels."""

    P: np.ndarray

    def __post_init__(self):
        if self.P.shape != (3, 4):
            raise ValueError(f"P must be (3, 4), got {self.P.shape}")
        if not np.all(np.isfinite(self.P)):
            raise NonFiniteValue("P contains non-finite entries")


@dataclass(frozen=True)
class PointCloud:
    """LIDAR returns as an (N, 4) float32 array of x, y, z, reflectance.

    Axes follow the velodyne convention: x forward, y left, z up, in meters.
    ``n_reflectance_clamped`` counts out-of-range reflectance values that were
    clamped into [0, 1] on load (real scans contain a few).
    """

    points: np.ndarray
    n_reflectance_clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 4:
            raise ValueError(f"points must be (N, 4), got {self.points.shape}")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def reflectance(self) -> np.ndarray:
        return self.points[:, 3]


def _parse_floats(key: str, payload: str, expected: int) -> np.ndarray:
    tokens = payload.split()
    if len(tokens) != expected:
        raise WrongArity(f"{key}: expected {expected} floats, got {len(tokens)}")
    values = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise MalformedNumber(f"{key}: cannot parse {tok!r}") from None
        if not math.isfinite(v):
            raise MalformedNumber(f"{key}: non-finite value {tok!r}")
        values.append(v)
    return np.array(values, dtype=np.float64)


def parse_calibration(text: str) -> RawCalibration:
    """Parse KITTI calibration text into the three relevant matrices.

    Lines look like ``P2: f f f ...`` with whitespace-separated decimals.
    Unknown keys are ignored; ``R_rect`` is accepted as an alias of
    ``R0_rect`` (``R0_rect`` wins if both are present).
    """
    rows: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, payload = line.split(":", 1)
        rows.setdefault(key.strip(), payload)

    def lookup(*names: str) -> tuple[str, str]:
        for name in names:
            if name in rows:
                return name, rows[name]
        raise MissingKey(f"calibration line {names[0]!r} not found")

    _, p2_payload = lookup("P2")
    rect_key, rect_payload = lookup(*_RECT_ALIASES)
    _, tr_payload = lookup("Tr_velo_to_cam")

    return RawCalibration(
        cam_projection=_parse_floats("P2", p2_payload, 12).reshape(3, 4),
        rect_rotation=_parse_floats(rect_key, rect_payload, 9).reshape(3, 3),
        lidar_to_cam=_parse_floats("Tr_velo_to_cam", tr_payload, 12).reshape(3, 4),
    )


def serialize_calibration(calib: RawCalibration) -> str:
    """Write the matrices back in KITTI's ``%.12e`` text layout."""
    def row(key: str, mat: np.ndarray) -> str:
        return key + ": " + " ".join(f"{v:.12e}" for v in mat.ravel())

    return "\n".join([
        row("P2", calib.cam_projection),
        row("R0_rect", calib.rect_rotation),
        row("Tr_velo_to_cam", calib.lidar_to_cam),
    ]) + "\n"


def _expand4(mat: np.ndarray) -> list[list[float]]:
    """Embed a 3x3 or 3x4 matrix into homogeneous 4x4 (bottom row 0,0,0,1)."""
    out = [[0.0, 0.0, 0.0, 0.0] for _ in range(4)]
    rows, cols = mat.shape
    for i in range(rows):
        for j in range(cols):
            out[i][j] = float(mat[i, j])
    out[3][3] = 1.0
    return out


def _matmul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    # plain left-to-right accumulation; keeps the composed chain reproducible
    # across implementations (no BLAS reassociation)
    n, k, m = len(a), len(b), len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i][p] * b[p][j]
            out[i][j] = acc
    return out


def compose_chain(calib: RawCalibration) -> CalibrationChain:
    """Compose P = P2 * expand4(R0_rect) * expand4(Tr_velo_to_cam)."""
    p2 = [[float(v) for v in row] for row in calib.cam_projection]
    rect4 = _expand4(calib.rect_rotation)
    velo4 = _expand4(calib.lidar_to_cam)
    P = _matmul(_matmul(p2, rect4), velo4)
    return CalibrationChain(P=np.array(P, dtype=np.float64))


def read_point_cloud(blob: bytes) -> PointCloud:
    """Decode a velodyne ``.bin`` blob: little-endian f32 (x, y, z, r) records."""
    if len(blob) % 16 != 0:
        raise TruncatedRecord(
            f"blob length {len(blob)} is not a multiple of 16 bytes"
        )
    points = np.frombuffer(blob, dtype="<f4").reshape(-1, 4).copy()
    if not np.all(np.isfinite(points)):
        raise NonFiniteValue("point cloud contains non-finite values")
    refl = points[:, 3]
    clamped = int(np.count_nonzero((refl < 0.0) | (refl > 1.0)))
    if clamped:
        np.clip(refl, 0.0, 1.0, out=refl)
    return PointCloud(points=points, n_reflectance_clamped=clamped)


def write_point_cloud(cloud: PointCloud) -> bytes:
    """Inverse of :func:`read_point_cloud` (little-endian f32 records)."""
    return np.ascontiguousarray(cloud.points, dtype="<f4").tobytes()
