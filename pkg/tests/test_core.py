"""Core types, validation, and the deterministic RNG."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from endogeo.core import (
    CameraIntrinsics,
    DepthMap,
    LossBreakdown,
    LossWeights,
    NonFiniteValue,
    NonPositiveDepth,
    PointCloud,
    ResolutionTooSmall,
    RgbImage,
    Rng,
    SdfGridSpec,
    ShapeMismatch,
    default_intrinsics,
    seeded_rng,
    validate_depth_map,
    worker_count,
)

_M64 = (1 << 64) - 1


def _ref_mix(z: int) -> int:
    """Independent re-statement of the 64-bit finalizer used by Rng."""
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _M64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _M64
    z ^= z >> 31
    return z


def _ref_draw(seed: int, i: int) -> int:
    return _ref_mix((seed + i * 0x9E3779B97F4A7C15) & _M64)


class TestRng:
    def test_matches_reference_stream(self):
        """Counter-based draws equal the reference finalizer at any index."""
        rng = Rng(42)
        assert [rng.next_u64() for _ in range(5)] == [
            _ref_draw(42, i) for i in range(1, 6)
        ]

    def test_batch_equals_scalar_sequence(self):
        a = seeded_rng(7)
        b = seeded_rng(7)
        batch = a.uniforms(33)
        scalars = np.array([b.uniform() for _ in range(33)])
        assert np.array_equal(batch, scalars)

    def test_uniform_unit_interval(self):
        u = seeded_rng(3).uniforms(4096)
        assert ((u >= 0.0) & (u < 1.0)).all()
        # (z >> 11) * 2^-53 exactly; the counter is 1-based
        assert u[0] == (_ref_draw(3, 1) >> 11) * 2.0**-53

    def test_uniform_range_affine(self):
        rng = seeded_rng(9)
        lo, hi = -2.5, 4.0
        vals = rng.uniforms(100, lo, hi)
        base = seeded_rng(9).uniforms(100)
        assert np.array_equal(vals, lo + (hi - lo) * base)

    def test_integer_bounds(self):
        rng = seeded_rng(11)
        draws = [rng.integer(0, 9) for _ in range(200)]
        assert set(draws) <= set(range(10))
        assert len(set(draws)) == 10  # all residues show up in 200 draws
        assert seeded_rng(11).integer(5, 5) == 5
        with pytest.raises(ValueError):
            seeded_rng(11).integer(3, 2)

    def test_normals_deterministic_and_finite(self):
        a = seeded_rng(5).normals(101, sigma=2.0)
        b = seeded_rng(5).normals(101, sigma=2.0)
        assert np.array_equal(a, b)
        assert np.isfinite(a).all()
        assert a.shape == (101,)

    def test_spawn_streams_are_unrelated(self):
        master = seeded_rng(0)
        c0 = master.spawn(0).uniforms(50)
        c1 = master.spawn(1).uniforms(50)
        assert not np.array_equal(c0, c1)
        # spawning does not consume from the parent stream
        assert seeded_rng(0).next_u64() == master.next_u64()

    def test_seed_wraps_to_uint64(self):
        assert Rng(2**64 + 5).next_u64() == Rng(5).next_u64()


class TestDepthMap:
    def test_accepts_valid(self):
        dm = DepthMap(np.full((3, 4), 2.0))
        assert dm.width == 4 and dm.height == 3
        assert dm.n_valid == 12
        assert dm.mask.all()

    def test_validate_rejects_nonpositive(self):
        with pytest.raises(NonPositiveDepth, match="flat index 1"):
            validate_depth_map(DepthMap(np.array([[1.0, 0.0], [1.0, 1.0]])))

    def test_validate_rejects_nonfinite(self):
        with pytest.raises(NonFiniteValue, match="flat index 1"):
            validate_depth_map(DepthMap(np.array([[1.0, np.nan], [1.0, 1.0]])))

    def test_nonfinite_reported_before_nonpositive(self):
        """When both problems exist, the non-finite check fires first."""
        with pytest.raises(NonFiniteValue):
            validate_depth_map(DepthMap.from_flat(2, 1, np.array([-1.0, np.inf])))

    def test_validate_is_idempotent(self):
        dm = DepthMap(np.full((2, 2), 3.0))
        assert validate_depth_map(validate_depth_map(dm)) is dm

    def test_mask_exempts_pixels(self):
        mask = np.array([[True, False], [True, True]])
        dm = DepthMap(np.array([[1.0, -5.0], [2.0, 3.0]]), mask)
        assert dm.n_valid == 3
        assert validate_depth_map(dm) is dm

    def test_mask_exempts_nonfinite_too(self):
        mask = np.array([[True, False]])
        dm = validate_depth_map(DepthMap(np.array([[1.0, np.nan]]), mask))
        assert dm.n_valid == 1

    def test_valid_pixel_checked_even_with_mask_present(self):
        mask = np.array([[True, True]])
        with pytest.raises(NonFiniteValue):
            validate_depth_map(DepthMap(np.array([[np.nan, 1.0]]), mask))

    def test_data_is_immutable_and_copied(self):
        src = np.ones((2, 2))
        dm = DepthMap(src)
        with pytest.raises(ValueError):
            dm.data[0, 0] = 3.0
        src[0, 0] = 7.0  # caller's buffer stays writable and independent
        assert dm.data[0, 0] == 1.0

    def test_mask_shape_must_match(self):
        with pytest.raises(ShapeMismatch):
            DepthMap(np.ones((2, 2)), np.ones((2, 3), dtype=bool))

    def test_requires_2d(self):
        with pytest.raises(ShapeMismatch):
            DepthMap(np.ones(4))


class TestRgbImage:
    def test_shape_and_range(self):
        img = RgbImage(np.zeros((2, 2, 3)))
        assert img.data.shape == (2, 2, 3)
        with pytest.raises(ShapeMismatch):
            RgbImage(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            RgbImage(np.full((2, 2, 3), 1.5))
        with pytest.raises(NonFiniteValue):
            RgbImage(np.full((2, 2, 3), np.nan))


class TestCameraIntrinsics:
    def test_default_intrinsics(self):
        cam = default_intrinsics(320, 240)
        assert cam.fx == cam.fy == 160.0  # max(W, H) / 2
        assert cam.cx == 159.5 and cam.cy == 119.5

    def test_focal_must_be_positive(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0)


class TestPointCloud:
    def test_validation(self):
        pc = PointCloud(np.zeros((5, 3)))
        assert len(pc) == 5
        with pytest.raises(ShapeMismatch):
            PointCloud(np.zeros((5, 2)))
        with pytest.raises(NonFiniteValue):
            PointCloud(np.array([[0.0, 0.0, np.inf]]))


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda1, w.lambda2, w.lambda3) == (1.0, 0.5, 0.1)

    def test_rejects_negative_and_all_zero(self):
        with pytest.raises(ValueError):
            LossWeights(lambda1=-0.1)
        with pytest.raises(ValueError):
            LossWeights(lambda1=0.0, lambda2=0.0, lambda3=0.0)


class TestSdfGridSpec:
    def test_valid(self):
        spec = SdfGridSpec((0, 0, 0), (1, 1, 1), 4, 5, 6)
        assert spec.n_samples == 120

    def test_resolution_floor(self):
        with pytest.raises(ResolutionTooSmall):
            SdfGridSpec((0, 0, 0), (1, 1, 1), 1, 4, 4)

    def test_bounds_must_be_ordered(self):
        with pytest.raises(ValueError):
            SdfGridSpec((0, 0, 0), (1, 0, 1), 2, 2, 2)

    def test_sample_budget(self):
        with pytest.raises(ValueError):
            SdfGridSpec((0, 0, 0), (1, 1, 1), 1025, 1024, 1024)


class TestLossBreakdown:
    def test_total_must_reconstruct(self):
        w = LossWeights()
        with pytest.raises(ValueError):
            LossBreakdown(
                depth=1.0, smooth=0.0, grad=0.0, normal=0.0, sdf=0.0,
                total=2.0, weights=w,
            )

    def test_as_dict_keys(self):
        w = LossWeights()
        bd = LossBreakdown(
            depth=1.0, smooth=0.5, grad=0.0, normal=0.0, sdf=0.0,
            total=1.5, weights=w,
        )
        assert list(bd.as_dict()) == ["depth", "smooth", "grad", "normal", "sdf", "total"]


class TestWorkerCount:
    def test_env_controls_workers(self, monkeypatch):
        monkeypatch.delenv("ENDOGEO_THREADS", raising=False)
        assert worker_count() == 1
        monkeypatch.setenv("ENDOGEO_THREADS", "4")
        assert worker_count() == 4
        monkeypatch.setenv("ENDOGEO_THREADS", "0")  # 0 = auto-detect
        assert worker_count() >= 1


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(1, 200))
def test_uniform_batches_always_in_unit_interval(seed, n):
    u = seeded_rng(seed).uniforms(n)
    assert ((u >= 0.0) & (u < 1.0)).all()
