"""Sparse cross-view pooling between camera front view and LIDAR BEV."""

from .calib import (
    CalibrationChain,
    PointCloud,
    RawCalibration,
    compose_chain,
    parse_calibration,
    read_point_cloud,
    serialize_calibration,
    write_point_cloud,
)
from .bev import BevFeatureGrid, encode_bev, read_grid_bytes, write_grid_bytes
from .pooling import (
    CoverageStats,
    FeatureMap,
    PoolingMatrix,
    apply_pooling,
    apply_pooling_grad,
    build_pooling_matrix,
    coverage,
    deserialize_matrix,
    random_pooling_matrix,
    serialize_matrix,
)
from .views import (
    BevSpec,
    CellIndex,
    FrontViewSpec,
    bev_cell,
    front_cell,
    project_point,
)

__version__ = "0.1.0"
