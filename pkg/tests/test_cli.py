import json
import struct

import numpy as np
import pytest

from xview.bev import read_grid_bytes, write_grid_bytes
from xview.cli import main
from xview.pooling import deserialize_matrix


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def frame(tmp_path, capsys):
    cloud = tmp_path / "cloud.bin"
    calib = tmp_path / "calib.txt"
    code, out, _ = run(capsys, "synth", "--out-cloud", str(cloud),
                       "--out-calib", str(calib), "--seed", "3")
    assert code == 0
    return cloud, calib


class TestSynthBuild:
    def test_build_reports_stats(self, tmp_path, capsys, frame):
        cloud, calib = frame
        matrix = tmp_path / "m.snhp"
        code, out, err = run(
            capsys, "build", "--calib", str(calib), "--cloud", str(cloud),
            "--out", str(matrix),
        )
        assert code == 0
        stats = json.loads(out)
        assert stats["nnz"] > 0
        assert 0 < stats["source_cells_used"] < 0.05
        assert matrix.exists()
        m = deserialize_matrix(matrix.read_bytes())
        assert m.nnz == stats["nnz"]

    def test_build_deterministic(self, tmp_path, capsys, frame):
        cloud, calib = frame
        args = ["build", "--calib", str(calib), "--cloud", str(cloud),
                "--kernel", "bilinear"]
        run(capsys, *args, "--out", str(tmp_path / "a.snhp"))
        run(capsys, *args, "--out", str(tmp_path / "b.snhp"))
        assert (tmp_path / "a.snhp").read_bytes() == (tmp_path / "b.snhp").read_bytes()

    def test_single_point_frame(self, tmp_path, capsys):
        cloud = tmp_path / "one.bin"
        # forward point at image center height, inside default BEV range
        cloud.write_bytes(struct.pack("<4f", 12.0, 0.5, -0.5, 0.4))
        calib = tmp_path / "calib.txt"
        run(capsys, "synth", "--out-cloud", str(tmp_path / "junk.bin"),
            "--out-calib", str(calib))
        code, out, _ = run(
            capsys, "build", "--calib", str(calib), "--cloud", str(cloud),
            "--out", str(tmp_path / "m.snhp"),
        )
        assert code == 0
        assert json.loads(out)["nnz"] == 1

    def test_missing_file_fails(self, tmp_path, capsys, frame):
        _, calib = frame
        code, _, err = run(
            capsys, "build", "--calib", str(calib), "--cloud",
            str(tmp_path / "nope.bin"), "--out", str(tmp_path / "m.snhp"),
        )
        assert code == 1
        assert "error: IOError" in err


class TestPool:
    def test_encode_build_pool_roundtrip(self, tmp_path, capsys, frame):
        cloud, calib = frame
        matrix = tmp_path / "m.snhp"
        run(capsys, "build", "--calib", str(calib), "--cloud", str(cloud),
            "--direction", "bev2fv", "--front-stride", "8", "--bev-stride", "4",
            "--out", str(matrix))
        grid = tmp_path / "bev.grid"
        run(capsys, "encode", "--cloud", str(cloud), "--bev-stride", "4",
            "--out", str(grid))
        pooled = tmp_path / "front.grid"
        code, out, _ = run(
            capsys, "pool", "--matrix", str(matrix), "--features", str(grid),
            "--out", str(pooled), "--out-shape", "48x160",
        )
        assert code == 0
        values = read_grid_bytes(pooled.read_bytes())
        assert values.shape == (48, 160, 9)
        assert values.any()

    def test_shape_mismatch_exit_code(self, tmp_path, capsys, frame):
        cloud, calib = frame
        matrix = tmp_path / "m.snhp"
        run(capsys, "build", "--calib", str(calib), "--cloud", str(cloud),
            "--out", str(matrix))
        bad = tmp_path / "bad.grid"
        bad.write_bytes(write_grid_bytes(np.zeros((3, 3, 2), dtype=np.float32)))
        code, _, err = run(capsys, "pool", "--matrix", str(matrix),
                           "--features", str(bad), "--out", str(tmp_path / "o.grid"))
        assert code == 1
        assert "error: ShapeMismatch" in err


class TestRender:
    def test_all_zero_grid_renders_black(self, tmp_path, capsys):
        grid = tmp_path / "z.grid"
        grid.write_bytes(write_grid_bytes(np.zeros((4, 5, 2), dtype=np.float32)))
        out = tmp_path / "img.pgm"
        code, _, _ = run(capsys, "render", "--input", str(grid), "--out", str(out))
        assert code == 0
        data = out.read_bytes()
        assert data.startswith(b"P5\n5 4\n255\n")
        assert data[len(b"P5\n5 4\n255\n"):] == b"\x00" * 20

    def test_single_hot_cell(self, tmp_path, capsys):
        values = np.zeros((3, 3, 1), dtype=np.float32)
        values[1, 2, 0] = 7.5
        grid = tmp_path / "g.grid"
        grid.write_bytes(write_grid_bytes(values))
        out = tmp_path / "img.pgm"
        run(capsys, "render", "--input", str(grid), "--out", str(out))
        pixels = out.read_bytes()[len(b"P5\n3 3\n255\n"):]
        assert pixels[1 * 3 + 2] == 255
        assert sum(pixels) == 255

    def test_channel_out_of_range(self, tmp_path, capsys):
        grid = tmp_path / "g.grid"
        grid.write_bytes(write_grid_bytes(np.zeros((2, 2, 2), dtype=np.float32)))
        code, _, err = run(capsys, "render", "--input", str(grid),
                           "--channel", "5", "--out", str(tmp_path / "o.pgm"))
        assert code == 1
        assert "error: ChannelOutOfRange" in err


class TestBench:
    def test_small_custom_workload(self, capsys):
        code, out, _ = run(
            capsys, "bench", "--workload", "custom", "--source-cells", "200",
            "--target-cells", "100", "--channels", "4", "--nnz", "300",
            "--reps", "2", "--seed", "0",
        )
        assert code == 0
        report = json.loads(out)
        assert set(report["ops"]) == {"build", "apply", "apply_grad"}
        for op in report["ops"].values():
            assert op["median_ms"] >= 0.0
            assert op["p95_ms"] >= op["median_ms"]


class TestLabelStats:
    def test_counts(self, tmp_path, capsys):
        boxes = tmp_path / "boxes.json"
        boxes.write_text(json.dumps({
            "gts": [{"cx": 5.0, "cy": 0.0, "length": 1.0, "width": 0.6, "yaw": 0.3}]
        }))
        code, out, _ = run(
            capsys, "label-stats", "--boxes", str(boxes),
            "--bev-range", "0,10,-5,5,-2.5,1", "--bev-stride", "4",
        )
        assert code == 0
        stats = json.loads(out)
        assert stats["n_anchors"] == 25 * 25 * 2
        assert stats["positive"] > 0
        assert stats["positive"] + stats["negative"] + stats["ignore"] == stats["n_anchors"]
