"""File-format tests pinned to exact bytes: PFM depth grids, PPM images,
ascii PLY clouds."""

import numpy as np
import pytest

from endogeo.core import (
    DepthMap,
    IoFailure,
    MalformedHeader,
    NegativeNonSentinel,
    NonFiniteValue,
    PointCloud,
    RgbImage,
    ShapeMismatch,
)
from endogeo.io import (
    read_depth_pfm,
    read_pfm_grid,
    read_rgb_ppm,
    write_cloud_ply,
    write_depth_pfm,
    write_pfm_grid,
    write_rgb_ppm,
)

from conftest import random_image


class TestPfmGrid:
    def test_header_and_payload_bytes(self, tmp_path):
        path = tmp_path / "g.pfm"
        write_pfm_grid(np.array([[1.0, 2.0], [3.0, 4.0]]), path)
        blob = path.read_bytes()
        assert blob.startswith(b"Pf\n2 2\n-1.0\n")
        # bottom row first in the payload
        body = np.frombuffer(blob[len(b"Pf\n2 2\n-1.0\n") :], dtype="<f4")
        assert body.tolist() == [3.0, 4.0, 1.0, 2.0]

    def test_round_trip_exact_at_f32(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = rng.uniform(-10.0, 10.0, size=(7, 5))
        path = tmp_path / "g.pfm"
        write_pfm_grid(grid, path)
        back = read_pfm_grid(path)
        assert np.array_equal(back, grid.astype(np.float32).astype(np.float64))

    def test_f32_representable_values_survive_exactly(self, tmp_path):
        grid = np.float64(np.float32(np.random.default_rng(1).uniform(0.01, 100.0, (4, 4))))
        path = tmp_path / "g.pfm"
        write_pfm_grid(grid, path)
        assert np.array_equal(read_pfm_grid(path), grid)

    def test_rejects_nonfinite(self, tmp_path):
        with pytest.raises(NonFiniteValue):
            write_pfm_grid(np.array([[1.0, np.inf]]), tmp_path / "g.pfm")

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(ShapeMismatch):
            write_pfm_grid(np.ones(4), tmp_path / "g.pfm")

    @pytest.mark.parametrize(
        "blob, message",
        [
            (b"Pf\n2 2\n-1.0", "truncated"),
            (b"PF\n2 2\n-1.0\n" + b"\0" * 48, "colour"),
            (b"P5\n2 2\n-1.0\n" + b"\0" * 16, "magic"),
            (b"Pf\ntwo 2\n-1.0\n" + b"\0" * 16, "unparseable"),
            (b"Pf\n0 2\n-1.0\n", "dimensions"),
            (b"Pf\n2 2\n1.0\n" + b"\0" * 16, "little-endian"),
            (b"Pf\n2 2\n-1.0\n" + b"\0" * 15, "payload"),
        ],
    )
    def test_malformed_headers(self, tmp_path, blob, message):
        path = tmp_path / "bad.pfm"
        path.write_bytes(blob)
        with pytest.raises(MalformedHeader, match=message):
            read_pfm_grid(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_pfm_grid(tmp_path / "absent.pfm")


class TestDepthPfm:
    def test_round_trip_all_valid(self, tmp_path):
        data = np.float64(np.float32([[0.5, 2.0], [90.0, 0.01]]))
        path = tmp_path / "d.pfm"
        write_depth_pfm(DepthMap(data), path)
        back = read_depth_pfm(path)
        assert back.validity_mask is None
        assert np.array_equal(back.data, data)

    def test_sentinel_round_trip(self, tmp_path):
        mask = np.array([[True, False], [True, True]])
        dm = DepthMap(np.float64(np.float32([[1.5, 7.0], [2.5, 3.5]])), mask)
        path = tmp_path / "d.pfm"
        write_depth_pfm(dm, path)
        back = read_depth_pfm(path)
        assert np.array_equal(back.mask, mask)
        assert np.array_equal(back.data[mask], dm.data[mask])
        assert back.data[0, 1] == 1.0  # placeholder keeps the map validatable

    def test_rewrite_is_byte_identical(self, tmp_path):
        mask = np.array([[True, False], [False, True]])
        dm = DepthMap(np.float64(np.float32([[1.5, 7.0], [2.5, 3.5]])), mask)
        a, b = tmp_path / "a.pfm", tmp_path / "b.pfm"
        write_depth_pfm(dm, a)
        write_depth_pfm(read_depth_pfm(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_negative_non_sentinel_rejected(self, tmp_path):
        path = tmp_path / "d.pfm"
        write_pfm_grid(np.array([[1.0, -0.5]]), path)
        with pytest.raises(NegativeNonSentinel):
            read_depth_pfm(path)

    def test_exact_sentinel_value_required(self, tmp_path):
        path = tmp_path / "d.pfm"
        write_pfm_grid(np.array([[1.0, -1.0]]), path)
        back = read_depth_pfm(path)
        assert back.mask.tolist() == [[True, False]]


class TestRgbPpm:
    def test_header_and_quantisation_bytes(self, tmp_path):
        img = RgbImage(np.full((1, 2, 3), 0.5))
        path = tmp_path / "i.ppm"
        write_rgb_ppm(img, path)
        blob = path.read_bytes()
        assert blob == b"P6\n2 1\n255\n" + bytes([128] * 6)  # floor(127.5 + 0.5)

    def test_extremes_map_to_bounds(self, tmp_path):
        img = RgbImage(np.stack([np.zeros((1, 1, 3)), np.ones((1, 1, 3))], axis=1)[0])
        path = tmp_path / "i.ppm"
        write_rgb_ppm(img, path)
        assert path.read_bytes()[-6:] == bytes([0, 0, 0, 255, 255, 255])

    def test_round_trip_lossless_at_8bit(self, tmp_path):
        img = random_image(2, h=6, w=5)
        path = tmp_path / "i.ppm"
        write_rgb_ppm(img, path)
        back = read_rgb_ppm(path)
        write_rgb_ppm(back, tmp_path / "j.ppm")
        assert path.read_bytes() == (tmp_path / "j.ppm").read_bytes()
        assert np.abs(back.data - img.data).max() <= 0.5 / 255.0

    @pytest.mark.parametrize(
        "blob, message",
        [
            (b"P6\n2 1\n255", "truncated"),
            (b"P5\n2 1\n255\n" + b"\0" * 6, "magic"),
            (b"P6\n2 one\n255\n" + b"\0" * 6, "unparseable"),
            (b"P6\n2 1\n65535\n" + b"\0" * 6, "maxval 255"),
            (b"P6\n2 1\n255\n" + b"\0" * 5, "payload"),
        ],
    )
    def test_malformed_headers(self, tmp_path, blob, message):
        path = tmp_path / "bad.ppm"
        path.write_bytes(blob)
        with pytest.raises(MalformedHeader, match=message):
            read_rgb_ppm(path)


class TestCloudPly:
    def test_exact_text(self, tmp_path):
        cloud = PointCloud([[0.0, -1.25, 2.0], [0.123456789, 1.0, 3.5]])
        path = tmp_path / "c.ply"
        write_cloud_ply(cloud, path)
        assert path.read_text() == (
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
            "0 -1.25 2\n0.123456789 1 3.5\n"
        )

    def test_empty_cloud_header_only(self, tmp_path):
        path = tmp_path / "c.ply"
        write_cloud_ply(PointCloud(np.zeros((0, 3))), path)
        text = path.read_text()
        assert "element vertex 0" in text
        assert text.endswith("end_header\n")

    def test_write_failure(self, tmp_path):
        cloud = PointCloud([[0.0, 0.0, 1.0]])
        with pytest.raises(IoFailure):
            write_cloud_ply(cloud, tmp_path / "no" / "dir" / "c.ply")
