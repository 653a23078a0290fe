"""Loss terms over depth maps, their weighted total, and analytic gradients.

Every term reduces by the mean over valid pixels (the intersection of the
input masks); gradient stencils touching an invalid pixel contribute zero.
Each function returns ``(value, gradient)`` where the gradient is the exact
(sub)derivative of the value with respect to each predicted depth, holding
piecewise-constant quantities (signs, nearest-neighbour assignments) fixed.
Reductions use numpy sums, so results never depend on the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AllPointsOutOfFrustum,
    CameraIntrinsics,
    DepthMap,
    EmptyOverlap,
    LossBreakdown,
    LossWeights,
    PointCloud,
    RgbImage,
    SdfGridSpec,
    ShapeMismatch,
    ShapeTooSmall,
    seeded_rng,
)
from .geometry import cloud_pixel_indices, depth_to_cloud
from .sdf import SpatialIndex, sample_grid

__all__ = [
    "loss_depth",
    "loss_smooth",
    "loss_grad",
    "loss_normal",
    "loss_sdf",
    "loss_total",
    "LossConfig",
    "SdfReference",
    "prepare_sdf_reference",
    "auto_grid_spec",
    "grad_check",
    "GRAD_CHECK_LOSSES",
]


def _require_same_shape(a: DepthMap, b: DepthMap) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"depth maps disagree: {a.data.shape} vs {b.data.shape}")


def _combined_valid(a: DepthMap, b: DepthMap) -> tuple[np.ndarray, int]:
    valid = a.mask & b.mask
    n = int(valid.sum())
    if n == 0:
        raise EmptyOverlap("no pixel is valid in both maps")
    return valid, n


def _pair_valid(valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Which forward differences have both endpoints valid."""
    vx = np.zeros_like(valid)
    vy = np.zeros_like(valid)
    vx[:, :-1] = valid[:, :-1] & valid[:, 1:]
    vy[:-1, :] = valid[:-1, :] & valid[1:, :]
    return vx, vy


def _masked_diffs(
    data: np.ndarray, vx: np.ndarray, vy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(data)
    gy = np.zeros_like(data)
    gx[:, :-1] = data[:, 1:] - data[:, :-1]
    gy[:-1, :] = data[1:, :] - data[:-1, :]
    return np.where(vx, gx, 0.0), np.where(vy, gy, 0.0)


def _scatter_pair(grad: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> None:
    """Accumulate d(term)/d(pixel) for terms built on forward differences:
    a coefficient c on gx(p) adds -c at p and +c at p + ex (likewise y)."""
    grad -= cx
    grad[:, 1:] += cx[:, :-1]
    grad -= cy
    grad[1:, :] += cy[:-1, :]


def _depth_parts(data: np.ndarray, gt_data: np.ndarray, valid: np.ndarray):
    diff = np.where(valid, data - gt_data, 0.0)
    return np.abs(diff), diff


def loss_depth(pred: DepthMap, gt: DepthMap) -> tuple[float, np.ndarray]:
    """Mean absolute depth difference over valid pixels."""
    _require_same_shape(pred, gt)
    valid, n = _combined_valid(pred, gt)
    terms, diff = _depth_parts(pred.data, gt.data, valid)
    value = float(terms.sum() / n)
    grad = np.sign(diff) / n
    return value, grad


def _edge_weights(image: RgbImage) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis exp(-mean_channel |forward image difference|), padded with 1."""
    img = image.data
    h, w = img.shape[:2]
    mx = np.zeros((h, w))
    my = np.zeros((h, w))
    mx[:, :-1] = np.mean(np.abs(img[:, 1:, :] - img[:, :-1, :]), axis=2)
    my[:-1, :] = np.mean(np.abs(img[1:, :, :] - img[:-1, :, :]), axis=2)
    return np.exp(-mx), np.exp(-my)


def _smooth_parts(data: np.ndarray, wx: np.ndarray, wy: np.ndarray, vx, vy):
    gx, gy = _masked_diffs(data, vx, vy)
    tx = wx * gx
    ty = wy * gy
    return tx**2 + ty**2, tx, ty


def loss_smooth(pred: DepthMap, image: RgbImage) -> tuple[float, np.ndarray]:
    """Edge-aware smoothness: squared depth differences, attenuated where the
    image itself has edges.  Zero for any constant prediction."""
    if image.data.shape[:2] != pred.data.shape:
        raise ShapeMismatch(
            f"image {image.data.shape[:2]} vs depth {pred.data.shape}"
        )
    valid = pred.mask
    n = int(valid.sum())
    if n == 0:
        raise EmptyOverlap("prediction has no valid pixel")
    vx, vy = _pair_valid(valid)
    wx, wy = _edge_weights(image)
    terms, tx, ty = _smooth_parts(pred.data, wx, wy, vx, vy)
    value = float(terms.sum() / n)
    grad = np.zeros_like(pred.data)
    _scatter_pair(grad, 2.0 * wx * tx / n, 2.0 * wy * ty / n)
    return value, grad


def _grad_parts(data: np.ndarray, ggx: np.ndarray, ggy: np.ndarray, vx, vy):
    pgx, pgy = _masked_diffs(data, vx, vy)
    dx = pgx - ggx
    dy = pgy - ggy
    return np.abs(dx) + np.abs(dy), dx, dy


def loss_grad(pred: DepthMap, gt: DepthMap) -> tuple[float, np.ndarray]:
    """Mean absolute difference of forward depth gradients, both axes."""
    _require_same_shape(pred, gt)
    valid, n = _combined_valid(pred, gt)
    vx, vy = _pair_valid(valid)
    ggx, ggy = _masked_diffs(gt.data, vx, vy)
    terms, dx, dy = _grad_parts(pred.data, ggx, ggy, vx, vy)
    value = float(terms.sum() / n)
    grad = np.zeros_like(pred.data)
    _scatter_pair(grad, np.sign(dx) / n, np.sign(dy) / n)
    return value, grad


def _normal_parts(data: np.ndarray, ggx, ggy, nb2, vx, vy, valid):
    pgx, pgy = _masked_diffs(data, vx, vy)
    dot = pgx * ggx + pgy * ggy + 1.0
    na2 = pgx**2 + pgy**2 + 1.0  # >= 1, never degenerate
    # single sqrt over the product: identical maps give dot == na2 == nb2
    # bitwise, sqrt(x*x) == x in round-to-nearest, so the term is exactly 0
    terms = np.where(valid, 1.0 - dot / np.sqrt(na2 * nb2), 0.0)
    return terms, pgx, pgy, dot, na2


def loss_normal(pred: DepthMap, gt: DepthMap) -> tuple[float, np.ndarray]:
    """Mean cosine misalignment 1 - <n_pred, n_gt> / (|n_pred| |n_gt|) of the
    raw normals (-gx, -gy, 1).  Each per-pixel term lies in [0, 2]."""
    _require_same_shape(pred, gt)
    valid, n = _combined_valid(pred, gt)
    vx, vy = _pair_valid(valid)
    ggx, ggy = _masked_diffs(gt.data, vx, vy)
    nb2 = ggx**2 + ggy**2 + 1.0
    terms, pgx, pgy, dot, na2 = _normal_parts(pred.data, ggx, ggy, nb2, vx, vy, valid)
    value = float(terms.sum() / n)
    # d(term)/d(pred gx); vx/vy gating covers every stencil that actually
    # depends on the prediction (padded or masked diffs are constant zero)
    denom = np.sqrt(na2 * nb2)
    ax = np.where(vx, dot * pgx * nb2 / denom**3 - ggx / denom, 0.0)
    ay = np.where(vy, dot * pgy * nb2 / denom**3 - ggy / denom, 0.0)
    grad = np.zeros_like(pred.data)
    _scatter_pair(grad, ax / n, ay / n)
    return value, grad


# ---------------------------------------------------------------------------
# Geometric consistency via signed-distance sampling.


def auto_grid_spec(
    cloud: PointCloud, resolution: tuple[int, int, int] = (16, 16, 16)
) -> SdfGridSpec:
    """Grid spec covering the cloud's box, padded 2.5% of its diagonal per
    side (flat clouds thus still get a proper box; a lone point gets 1.0)."""
    pts = cloud.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    pad = 0.025 * diag if diag > 0.0 else 1.0
    return SdfGridSpec(lo - pad, hi + pad, *resolution)


@dataclass(frozen=True)
class SdfReference:
    """Precomputed ground-truth side of the geometric-consistency loss.

    Reusable across predictions that share the ground truth, the camera, the
    grid spec, and the validity mask.
    """

    grid: np.ndarray  # (N, 3) sample points
    geo_ok: np.ndarray  # (N,) projects in-frustum onto a gt-valid pixel
    px: np.ndarray  # (N,) projected pixel column, clipped
    py: np.ndarray  # (N,) projected pixel row, clipped
    phi_gt: np.ndarray  # (N,) signed distance to the gt surface (NaN outside)
    spec: SdfGridSpec


def _resolve_spec(spec, gt: DepthMap, cam: CameraIntrinsics) -> SdfGridSpec:
    if isinstance(spec, SdfGridSpec):
        return spec
    if spec == "auto":
        return auto_grid_spec(depth_to_cloud(gt, cam))
    raise ValueError(f"spec must be an SdfGridSpec or 'auto', got {spec!r}")


def prepare_sdf_reference(
    gt: DepthMap, cam: CameraIntrinsics, spec="auto"
) -> SdfReference:
    from .sdf import _project_to_pixels

    spec = _resolve_spec(spec, gt, cam)
    grid = sample_grid(spec)
    px, py, geo_ok = _project_to_pixels(grid, gt, cam)
    if not geo_ok.any():
        raise AllPointsOutOfFrustum("no grid sample projects onto a valid pixel")
    gt_cloud = depth_to_cloud(gt, cam)
    index = SpatialIndex(gt_cloud)
    phi = np.full(grid.shape[0], np.nan)
    _, dist = index.query(grid[geo_ok])
    sign = np.where(grid[geo_ok, 2] > gt.data[py[geo_ok], px[geo_ok]], 1.0, -1.0)
    phi[geo_ok] = sign * dist
    return SdfReference(grid=grid, geo_ok=geo_ok, px=px, py=py, phi_gt=phi, spec=spec)


def loss_sdf(
    pred: DepthMap,
    gt: DepthMap,
    cam: CameraIntrinsics,
    spec="auto",
    reference: SdfReference | None = None,
) -> tuple[float, np.ndarray]:
    """Mean absolute difference of signed distances sampled on a 3D grid.

    Sample points must project onto a pixel valid in both maps to be
    included; the mean runs over included samples only.  The gradient holds
    the nearest-neighbour assignment and both signs fixed: a sample assigned
    to predicted surface point P (from pixel q with ray r = P / P_z) moves
    that pixel by sign(phi_pred - phi_gt) * sign_pred * ((P - X) . r) / |P - X|.
    Pass a reusable ``reference`` when evaluating many predictions against
    one ground truth (masks must then coincide).
    """
    _require_same_shape(pred, gt)
    if reference is None:
        reference = prepare_sdf_reference(gt, cam, _resolve_spec(spec, gt, cam))

    included = reference.geo_ok & pred.mask[reference.py, reference.px]
    m = int(included.sum())
    if m == 0:
        raise AllPointsOutOfFrustum("no grid sample projects onto a valid pixel")

    cloud = depth_to_cloud(pred, cam)
    pixel_of_point = cloud_pixel_indices(pred)
    index = SpatialIndex(cloud)

    x = reference.grid[included]
    ni, d_p = index.query(x)
    s_p = np.where(
        x[:, 2] > pred.data[reference.py[included], reference.px[included]], 1.0, -1.0
    )
    phi_p = s_p * d_p
    diffs = phi_p - reference.phi_gt[included]
    value = float(np.abs(diffs).sum() / m)

    p = cloud.points[ni]
    num = np.einsum("ij,ij->i", p - x, p) / p[:, 2]  # (P - X) . (P / P_z)
    coeff = np.zeros_like(d_p)
    np.divide(np.sign(diffs) * s_p * num, d_p, out=coeff, where=d_p > 0.0)
    grad_flat = np.zeros(pred.data.size)
    np.add.at(grad_flat, pixel_of_point[ni], coeff / m)
    return value, grad_flat.reshape(pred.data.shape)


# ---------------------------------------------------------------------------
# Weighted total.


@dataclass(frozen=True)
class LossConfig:
    """Weights plus the grid used by the geometric term ('auto' fits the
    ground-truth cloud at 16^3)."""

    weights: LossWeights = LossWeights()
    sdf_spec: SdfGridSpec | str = "auto"


def loss_total(
    pred: DepthMap,
    gt: DepthMap,
    image: RgbImage,
    cam: CameraIntrinsics,
    config: LossConfig | None = None,
    sdf_reference: SdfReference | None = None,
) -> LossBreakdown:
    """All five terms combined: lambda1*(depth + smooth) + lambda2*(grad +
    normal) + lambda3*sdf, with the summed pixel gradient attached.

    Terms with a zero weight are skipped outright and reported as 0.0, so a
    disabled term costs nothing and cannot perturb the others.
    """
    cfg = config if config is not None else LossConfig()
    w = cfg.weights
    grad = np.zeros_like(pred.data)
    d = s = g = nrm = sd = 0.0
    if w.lambda1 > 0.0:
        d, gd = loss_depth(pred, gt)
        s, gs = loss_smooth(pred, image)
        grad += w.lambda1 * (gd + gs)
    if w.lambda2 > 0.0:
        g, gg = loss_grad(pred, gt)
        nrm, gn = loss_normal(pred, gt)
        grad += w.lambda2 * (gg + gn)
    if w.lambda3 > 0.0:
        sd, gsd = loss_sdf(pred, gt, cam, cfg.sdf_spec, reference=sdf_reference)
        grad += w.lambda3 * gsd
    total = w.lambda1 * (d + s) + w.lambda2 * (g + nrm) + w.lambda3 * sd
    return LossBreakdown(
        depth=d,
        smooth=s,
        grad=g,
        normal=nrm,
        sdf=sd,
        total=total,
        weights=w,
        gradient=grad,
    )


# ---------------------------------------------------------------------------
# Finite-difference verification.

GRAD_CHECK_LOSSES = ("depth", "smooth", "grad", "normal", "sdf")


def grad_check(
    loss_name: str,
    pred: DepthMap,
    gt: DepthMap | None = None,
    image: RgbImage | None = None,
    cam: CameraIntrinsics | None = None,
    spec="auto",
    seed: int = 0,
    h: float = 1e-5,
    jitter: float = 1e-3,
) -> float:
    """Max relative error between the analytic gradient and central
    differences, over valid pixels.

    The prediction is first jittered multiplicatively by up to ``jitter`` so
    the check lands away from subgradient kinks; differences use step ``h``
    and the error denominator is max(|analytic|, |numeric|, 1e-8).  For the
    per-pixel stencil losses the central difference subtracts the two
    per-pixel term maps elementwise before reducing, so terms the probe
    cannot touch drop out exactly instead of leaving round-off behind.
    """
    if loss_name not in GRAD_CHECK_LOSSES:
        raise ValueError(f"unknown loss {loss_name!r}, pick from {GRAD_CHECK_LOSSES}")
    if min(pred.data.shape) < 4:
        raise ShapeTooSmall(f"need at least 4x4, got {pred.data.shape}")
    need = {
        "depth": ("gt",),
        "smooth": ("image",),
        "grad": ("gt",),
        "normal": ("gt",),
        "sdf": ("gt", "cam"),
    }[loss_name]
    ctx = {"gt": gt, "image": image, "cam": cam}
    for name in need:
        if ctx[name] is None:
            raise ValueError(f"loss {loss_name!r} needs {name}")

    rng = seeded_rng(seed)
    factors = 1.0 + rng.uniforms(pred.data.size, -jitter, jitter)
    base = pred.data * factors.reshape(pred.data.shape)
    jittered = DepthMap(base, pred.validity_mask)

    # fn: full loss for the analytic gradient; terms_fn: dense per-pixel
    # term map whose sum / n is the loss value (None -> difference fn).
    terms_fn = None
    if loss_name == "sdf":
        reference = prepare_sdf_reference(gt, cam, _resolve_spec(spec, gt, cam))

        def fn(dm: DepthMap):
            return loss_sdf(dm, gt, cam, reference=reference)

        n = 1  # unused
    elif loss_name == "depth":
        fn = lambda dm: loss_depth(dm, gt)
        valid, n = _combined_valid(jittered, gt)
        terms_fn = lambda data: _depth_parts(data, gt.data, valid)[0]
    elif loss_name == "smooth":
        fn = lambda dm: loss_smooth(dm, image)
        valid = jittered.mask
        n = int(valid.sum())
        vx, vy = _pair_valid(valid)
        wx, wy = _edge_weights(image)
        terms_fn = lambda data: _smooth_parts(data, wx, wy, vx, vy)[0]
    elif loss_name == "grad":
        fn = lambda dm: loss_grad(dm, gt)
        valid, n = _combined_valid(jittered, gt)
        vx, vy = _pair_valid(valid)
        ggx, ggy = _masked_diffs(gt.data, vx, vy)
        terms_fn = lambda data: _grad_parts(data, ggx, ggy, vx, vy)[0]
    else:
        fn = lambda dm: loss_normal(dm, gt)
        valid, n = _combined_valid(jittered, gt)
        vx, vy = _pair_valid(valid)
        ggx, ggy = _masked_diffs(gt.data, vx, vy)
        nb2 = ggx**2 + ggy**2 + 1.0
        terms_fn = lambda data: _normal_parts(data, ggx, ggy, nb2, vx, vy, valid)[0]

    _, analytic = fn(jittered)
    worst = 0.0
    rows, cols = np.nonzero(jittered.mask)
    work = np.array(base)
    for r, c in zip(rows, cols):
        orig = work[r, c]
        work[r, c] = orig + h
        if terms_fn is None:
            hi, _ = fn(DepthMap(work, pred.validity_mask))
        else:
            hi_terms = terms_fn(work)
        work[r, c] = orig - h
        if terms_fn is None:
            lo, _ = fn(DepthMap(work, pred.validity_mask))
            numeric = (hi - lo) / (2.0 * h)
        else:
            numeric = (hi_terms - terms_fn(work)).sum() / (2.0 * h * n)
        work[r, c] = orig
        a = analytic[r, c]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, float(rel))
    return worst
