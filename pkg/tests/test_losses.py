"""Loss term tests: hand-evaluated fixtures, identities, masking semantics,
gradient verification, and an independent loop-based reference for the
signed-distance term.
"""

import math

import numpy as np
import pytest

from endogeo.core import (
    DepthMap,
    EmptyOverlap,
    LossWeights,
    RgbImage,
    SdfGridSpec,
    ShapeMismatch,
    ShapeTooSmall,
    default_intrinsics,
)
from endogeo.geometry import depth_to_cloud
from endogeo.losses import (
    GRAD_CHECK_LOSSES,
    LossConfig,
    auto_grid_spec,
    grad_check,
    loss_depth,
    loss_grad,
    loss_normal,
    loss_sdf,
    loss_smooth,
    loss_total,
    prepare_sdf_reference,
)
from endogeo.sdf import brute_force_nearest, sample_grid

from conftest import random_depth_pair, random_image

PRED = np.array([[1.0, 2.0], [3.0, 5.0]])
GT_FLAT = np.ones((2, 2))


def _gray_image(h, w, value=0.5):
    return RgbImage(np.full((h, w, 3), value))


class TestDepthLoss:
    def test_hand_fixture(self):
        value, grad = loss_depth(DepthMap(PRED), DepthMap(GT_FLAT))
        assert value == 1.75
        assert np.array_equal(grad, [[0.0, 0.25], [0.25, 0.25]])

    def test_identity_is_exact_zero(self):
        gt, _ = random_depth_pair(0)
        value, grad = loss_depth(gt, gt)
        assert value == 0.0 and not grad.any()

    def test_constant_offset(self):
        gt, _ = random_depth_pair(1)
        for c in (0.25, -0.125):
            pred = DepthMap(gt.data + c)
            value, _ = loss_depth(pred, gt)
            assert abs(value - abs(c)) < 1e-12

    def test_mask_intersection(self):
        pred = DepthMap(np.array([[1.0, 9.0], [1.0, 1.0]]),
                        np.array([[True, False], [True, True]]))
        gt = DepthMap(np.array([[2.0, 1.0], [1.0, 1.0]]),
                      np.array([[True, True], [False, True]]))
        value, grad = loss_depth(pred, gt)
        # overlap = pixels (0,0) and (1,1): |1-2| + 0 over 2
        assert value == 0.5
        assert grad[0, 1] == 0.0 and grad[1, 0] == 0.0

    def test_disjoint_masks(self):
        pred = DepthMap(np.ones((2, 2)), np.array([[True, True], [False, False]]))
        gt = DepthMap(np.ones((2, 2)), np.array([[False, False], [True, True]]))
        with pytest.raises(EmptyOverlap):
            loss_depth(pred, gt)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            loss_depth(DepthMap(np.ones((2, 2))), DepthMap(np.ones((2, 3))))


class TestSmoothLoss:
    def test_hand_fixture_flat_image(self):
        value, _ = loss_smooth(DepthMap(PRED), _gray_image(2, 2))
        # squared forward diffs, unit weights: (1+4) + 9 + 4 + 0 over 4
        assert value == 4.5

    def test_hand_fixture_edge_weights(self):
        chan = np.array([[0.0, 0.5], [0.0, 0.5]])
        image = RgbImage(np.stack([chan, chan, chan], axis=2))
        value, _ = loss_smooth(DepthMap(PRED), image)
        w = math.exp(-0.5)
        expected = ((w * 1.0) ** 2 + (w * 2.0) ** 2 + 4.0 + 9.0) / 4.0
        assert abs(value - expected) < 1e-14 * expected

    def test_constant_prediction_is_zero(self):
        value, grad = loss_smooth(DepthMap(np.full((4, 4), 2.0)), random_image(2, 4, 4))
        assert value == 0.0 and not grad.any()

    def test_image_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            loss_smooth(DepthMap(np.ones((2, 2))), _gray_image(3, 2))

    def test_stronger_edges_lower_loss(self):
        """The image edge attenuates the depth-gradient penalty."""
        pred = DepthMap(np.array([[1.0, 2.0], [1.0, 2.0]]))
        flat, _ = loss_smooth(pred, _gray_image(2, 2))
        chan = np.array([[0.0, 1.0], [0.0, 1.0]])
        edgy, _ = loss_smooth(pred, RgbImage(np.stack([chan] * 3, axis=2)))
        assert edgy < flat


class TestGradLoss:
    def test_hand_fixture(self):
        value, _ = loss_grad(DepthMap(PRED), DepthMap(GT_FLAT))
        assert value == 2.0

    def test_identity_and_offset(self):
        gt, _ = random_depth_pair(2)
        assert loss_grad(gt, gt)[0] == 0.0
        value, _ = loss_grad(DepthMap(gt.data + 3.0), gt)
        assert value < 1e-12  # offset survives only as difference round-off

    def test_masked_pair_diffs_dropped(self):
        mask = np.array([[True, False, True], [True, True, True]])
        pred = DepthMap(np.array([[1.0, 50.0, 1.0], [1.0, 1.0, 1.0]]), mask)
        gt = DepthMap(np.ones((2, 3)), mask)
        value, _ = loss_grad(pred, gt)
        assert value == 0.0  # every diff touching the masked pixel is gone


class TestNormalLoss:
    def test_hand_fixture(self):
        value, _ = loss_normal(DepthMap(PRED), DepthMap(GT_FLAT))
        expected = (
            3.0 - 1.0 / math.sqrt(6.0) - 1.0 / math.sqrt(10.0) - 1.0 / math.sqrt(5.0)
        ) / 4.0
        assert abs(value - expected) < 1e-14

    def test_identity_and_offset(self):
        gt, _ = random_depth_pair(3)
        assert loss_normal(gt, gt)[0] == 0.0
        value, _ = loss_normal(DepthMap(gt.data - 0.2), gt)
        assert abs(value) < 1e-12

    def test_terms_bounded_by_two(self):
        gt, pred = random_depth_pair(4)
        steep = DepthMap(pred.data + 10.0 * np.arange(8)[None, :])
        value, _ = loss_normal(steep, gt)
        assert 0.0 <= value <= 2.0


def _reference_sdf_loss(pred, gt, cam, spec):
    """Loop-based restatement of the signed-distance loss definition."""

    def phi(point, surface):
        u = cam.fx * point[0] / point[2] + cam.cx
        v = cam.fy * point[1] / point[2] + cam.cy
        px, py = int(math.floor(u + 0.5)), int(math.floor(v + 0.5))
        if point[2] <= 0 or not (0 <= px < surface.width and 0 <= py < surface.height):
            return None
        if not surface.mask[py, px]:
            return None
        _, dist = brute_force_nearest(point, depth_to_cloud(surface, cam))
        sign = 1.0 if point[2] > surface.data[py, px] else -1.0
        return sign * dist

    total, count = 0.0, 0
    for x in sample_grid(spec):
        pg = phi(x, gt)
        if pg is None:
            continue
        pp = phi(x, pred)
        if pp is None:
            continue
        total += abs(pp - pg)
        count += 1
    return total / count


class TestSdfLoss:
    def setup_method(self):
        self.cam = default_intrinsics(4, 4)
        self.gt = DepthMap(np.full((4, 4), 2.0))
        self.spec = SdfGridSpec((-0.8, -0.8, 1.4), (0.8, 0.8, 2.6), 4, 4, 4)

    def test_identity_is_exact_zero(self):
        value, grad = loss_sdf(self.gt, self.gt, self.cam, self.spec)
        assert value == 0.0 and not grad.any()

    def test_shifted_plane_matches_loop_reference(self):
        pred = DepthMap(np.full((4, 4), 2.2))
        value, _ = loss_sdf(pred, self.gt, self.cam, self.spec)
        expected = _reference_sdf_loss(pred, self.gt, self.cam, self.spec)
        assert abs(value - expected) < 1e-12
        assert value > 0.0

    def test_random_pair_matches_loop_reference(self):
        gt, pred = random_depth_pair(5, h=4, w=4)
        spec = auto_grid_spec(depth_to_cloud(gt, self.cam), (3, 3, 3))
        value, _ = loss_sdf(pred, gt, self.cam, spec)
        expected = _reference_sdf_loss(pred, gt, self.cam, spec)
        assert abs(value - expected) < 1e-12

    def test_reference_reuse_is_bitwise(self):
        gt, pred = random_depth_pair(6, h=4, w=4)
        ref = prepare_sdf_reference(gt, self.cam, self.spec)
        v1, g1 = loss_sdf(pred, gt, self.cam, self.spec)
        v2, g2 = loss_sdf(pred, gt, self.cam, reference=ref)
        assert v1 == v2 and np.array_equal(g1, g2)

    def test_auto_spec_accepted(self):
        gt, pred = random_depth_pair(7, h=4, w=4)
        value, _ = loss_sdf(pred, gt, self.cam, "auto")
        assert math.isfinite(value) and value >= 0.0

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            loss_sdf(self.gt, self.gt, self.cam, "bogus")


class TestAutoGridSpec:
    def test_padded_bbox(self):
        cloud = depth_to_cloud(DepthMap(np.full((3, 3), 2.0)), default_intrinsics(3, 3))
        spec = auto_grid_spec(cloud, (5, 6, 7))
        lo = cloud.points.min(axis=0)
        hi = cloud.points.max(axis=0)
        pad = 0.025 * float(np.linalg.norm(hi - lo))
        assert np.allclose(spec.x_lb, lo - pad, atol=1e-15)
        assert np.allclose(spec.x_ub, hi + pad, atol=1e-15)
        assert (spec.rx, spec.ry, spec.rz) == (5, 6, 7)

    def test_lone_point_gets_unit_pad(self):
        from endogeo.core import PointCloud

        spec = auto_grid_spec(PointCloud([[1.0, 2.0, 3.0]]), (2, 2, 2))
        assert np.array_equal(spec.x_lb, [0.0, 1.0, 2.0])
        assert np.array_equal(spec.x_ub, [2.0, 3.0, 4.0])


class TestLossTotal:
    def setup_method(self):
        self.cam = default_intrinsics(8, 8)
        self.gt, self.pred = random_depth_pair(8)
        self.image = random_image(8)

    def test_breakdown_composes_parts(self):
        w = LossWeights(1.0, 0.5, 0.1)
        cfg = LossConfig(weights=w)
        bd = loss_total(self.pred, self.gt, self.image, self.cam, cfg)
        d, _ = loss_depth(self.pred, self.gt)
        s, _ = loss_smooth(self.pred, self.image)
        g, _ = loss_grad(self.pred, self.gt)
        nr, _ = loss_normal(self.pred, self.gt)
        sd, _ = loss_sdf(self.pred, self.gt, self.cam, "auto")
        assert (bd.depth, bd.smooth, bd.grad, bd.normal, bd.sdf) == (d, s, g, nr, sd)
        assert bd.total == w.lambda1 * (d + s) + w.lambda2 * (g + nr) + w.lambda3 * sd

    def test_gradient_composes_parts(self):
        bd = loss_total(self.pred, self.gt, self.image, self.cam)
        _, gd = loss_depth(self.pred, self.gt)
        _, gs = loss_smooth(self.pred, self.image)
        _, gg = loss_grad(self.pred, self.gt)
        _, gn = loss_normal(self.pred, self.gt)
        _, gsd = loss_sdf(self.pred, self.gt, self.cam, "auto")
        w = LossWeights()
        expected = w.lambda1 * (gd + gs) + w.lambda2 * (gg + gn) + w.lambda3 * gsd
        assert np.allclose(bd.gradient, expected, atol=1e-15)

    def test_zero_weight_skips_term(self):
        # a spec that would raise if the geometric term ever ran
        cfg = LossConfig(weights=LossWeights(1.0, 1.0, 0.0), sdf_spec="bogus")
        bd = loss_total(self.pred, self.gt, self.image, self.cam, cfg)
        assert bd.sdf == 0.0
        with pytest.raises(ValueError):
            loss_total(
                self.pred, self.gt, self.image, self.cam,
                LossConfig(weights=LossWeights(1.0, 1.0, 0.1), sdf_spec="bogus"),
            )

    def test_as_dict_key_order(self):
        bd = loss_total(self.pred, self.gt, self.image, self.cam)
        assert list(bd.as_dict()) == ["depth", "smooth", "grad", "normal", "sdf", "total"]


class TestGradCheck:
    def test_stencil_losses_pass(self):
        gt, pred = random_depth_pair(0)
        image = random_image(0)
        assert grad_check("depth", pred, gt=gt) < 1e-4
        assert grad_check("smooth", pred, image=image) < 1e-4
        assert grad_check("grad", pred, gt=gt) < 1e-4
        assert grad_check("normal", pred, gt=gt) < 1e-4

    def test_sdf_passes(self):
        gt, pred = random_depth_pair(0)
        cam = default_intrinsics(8, 8)
        spec = auto_grid_spec(depth_to_cloud(gt, cam), (8, 8, 8))
        assert grad_check("sdf", pred, gt=gt, cam=cam, spec=spec) < 1e-3

    def test_unknown_loss(self):
        gt, pred = random_depth_pair(1)
        with pytest.raises(ValueError):
            grad_check("huber", pred, gt=gt)

    def test_missing_context(self):
        gt, pred = random_depth_pair(1)
        with pytest.raises(ValueError, match="needs"):
            grad_check("depth", pred)
        with pytest.raises(ValueError, match="needs"):
            grad_check("smooth", pred, gt=gt)

    def test_too_small(self):
        with pytest.raises(ShapeTooSmall):
            grad_check("depth", DepthMap(np.ones((3, 3))), gt=DepthMap(np.ones((3, 3))))

    def test_loss_names_frozen(self):
        assert GRAD_CHECK_LOSSES == ("depth", "smooth", "grad", "normal", "sdf")
