import numpy as np
import pytest

from xview.bev import (
    BevFeatureGrid,
    encode_bev,
    read_grid_bytes,
    write_grid_bytes,
)
from xview.calib import PointCloud
from xview.errors import BadMagic, Truncated
from xview.views import BevSpec

SPEC = BevSpec(x_range=(0, 60), y_range=(-30, 30), z_range=(-2.5, 1.0),
               resolution=0.1, stride=1)


def cloud_of(*rows):
    return PointCloud(points=np.array(rows, dtype=np.float32).reshape(-1, 4))


class TestEncode:
    def test_empty_cloud_all_zero(self):
        grid = encode_bev(cloud_of(), SPEC, slices=7)
        assert grid.values.shape == (600, 600, 9)
        assert not grid.values.any()

    def test_single_point_hand_values(self):
        # slice 0 of 7 over z [-2.5, 1.0): thickness 0.5, slice-0 midpoint -2.25
        grid = encode_bev(cloud_of([0.05, -29.95, -2.25, 0.5]), SPEC, slices=7)
        assert grid.density[0, 0] == pytest.approx(0.125)
        assert grid.max_intensity[0, 0] == pytest.approx(0.5)
        assert grid.slice_heights[0, 0, 0] == pytest.approx(0.5)
        assert grid.slice_heights[0, 0, 1:].tolist() == [0.0] * 6
        # nothing else touched
        total = float(grid.values.sum())
        assert total == pytest.approx(0.125 + 0.5 + 0.5)

    def test_shape_600x600x9(self):
        grid = encode_bev(cloud_of([1, 1, 0, 0.2]), SPEC, slices=7)
        assert grid.values.shape == (600, 600, 9)

    def test_channel_count_contract(self):
        for slices in (1, 3, 12):
            grid = encode_bev(cloud_of([1, 1, 0, 0.2]), SPEC, slices=slices)
            assert grid.values.shape[2] == 2 + slices

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(3)
        pts = np.column_stack(
            [
                rng.uniform(0, 60, 500),
                rng.uniform(-30, 30, 500),
                rng.uniform(-2.5, 1.0, 500),
                rng.uniform(0, 1, 500),
            ]
        ).astype(np.float32)
        shuffled = pts[rng.permutation(500)]
        a = encode_bev(PointCloud(points=pts), SPEC, slices=7)
        b = encode_bev(PointCloud(points=shuffled), SPEC, slices=7)
        assert np.array_equal(a.values, b.values)

    def test_monotonicity_of_adding_a_point(self):
        rng = np.random.default_rng(4)
        pts = np.column_stack(
            [
                rng.uniform(0, 60, 200),
                rng.uniform(-30, 30, 200),
                rng.uniform(-2.5, 1.0, 200),
                rng.uniform(0, 1, 200),
            ]
        ).astype(np.float32)
        base = encode_bev(PointCloud(points=pts[:-1]), SPEC, slices=7)
        more = encode_bev(PointCloud(points=pts), SPEC, slices=7)
        x, y = float(pts[-1, 0]), float(pts[-1, 1])
        row, col = int(x / 0.1), int((y + 30) / 0.1)
        assert np.all(more.values[row, col] >= base.values[row, col])
        mask = np.ones((600, 600), dtype=bool)
        mask[row, col] = False
        assert np.array_equal(more.values[mask], base.values[mask])

    def test_density_saturates(self):
        pts = [[0.05, -29.95, 0.0, 0.1]] * 12
        grid = encode_bev(cloud_of(*pts), SPEC, slices=7)
        assert grid.density[0, 0] == 1.0

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            encode_bev(cloud_of(), SPEC, slices=0)


class TestGridFormat:
    def test_roundtrip(self):
        rng = np.random.default_rng(5)
        values = rng.random((4, 6, 3), dtype=np.float32)
        assert np.array_equal(read_grid_bytes(write_grid_bytes(values)), values)

    def test_bad_magic(self):
        blob = bytearray(write_grid_bytes(np.zeros((2, 2, 1), dtype=np.float32)))
        blob[0] = ord("X")
        with pytest.raises(BadMagic):
            read_grid_bytes(bytes(blob))

    def test_truncated(self):
        blob = write_grid_bytes(np.zeros((2, 2, 1), dtype=np.float32))
        with pytest.raises(Truncated):
            read_grid_bytes(blob[:-3])
        with pytest.raises(Truncated):
            read_grid_bytes(blob[:4])
