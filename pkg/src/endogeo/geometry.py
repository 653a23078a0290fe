"""Pinhole projection, image-space gradients, normals, and curvature maps.

Conventions used throughout: pixel (u, v) = (column, row) at integer
centres; camera frame is x right, y down, z forward; depth is camera Z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BehindCamera,
    CameraIntrinsics,
    DepthMap,
    NonPositiveDepth,
    PointCloud,
    ShapeMismatch,
    ShapeTooSmall,
    _freeze,
)

__all__ = [
    "GradientPair",
    "NormalMap",
    "ShapeIndexMap",
    "image_gradients",
    "project",
    "project_points",
    "back_project",
    "depth_to_cloud",
    "cloud_pixel_indices",
    "normals_from_depth",
    "shape_index",
]


@dataclass(frozen=True)
class GradientPair:
    """Forward-difference gradients; last column of gx and last row of gy are 0."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gx", _freeze(np.asarray(self.gx, dtype=np.float64)))
        object.__setattr__(self, "gy", _freeze(np.asarray(self.gy, dtype=np.float64)))


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unnormalised surface normals (-gx, -gy, 1)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ShapeMismatch(f"normal data must be (H, W, 3), got {d.shape}")
        object.__setattr__(self, "data", _freeze(d))


@dataclass(frozen=True)
class ShapeIndexMap:
    """Per-pixel shape index in [-1, 1]; ``valid`` is False where undefined."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if v.shape != m.shape:
            raise ShapeMismatch(f"values {v.shape} vs valid {m.shape}")
        object.__setattr__(self, "values", _freeze(v))
        object.__setattr__(self, "valid", _freeze(m))


def image_gradients(grid: np.ndarray) -> GradientPair:
    """Forward differences along x (columns) and y (rows), zero-padded.

    gx[r, c] = grid[r, c+1] - grid[r, c] with gx[:, -1] = 0; gy likewise
    down rows with gy[-1, :] = 0.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ShapeMismatch(f"expected a 2D grid, got shape {g.shape}")
    if g.shape[0] < 2 or g.shape[1] < 2:
        raise ShapeTooSmall(f"need at least 2x2 to difference, got {g.shape}")
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, :-1] = g[:, 1:] - g[:, :-1]
    gy[:-1, :] = g[1:, :] - g[:-1, :]
    return GradientPair(gx, gy)


def project(point, cam: CameraIntrinsics) -> tuple[float, float]:
    """Camera-frame point -> continuous pixel (u, v).  Z must be positive."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if p[2] <= 0.0:
        raise BehindCamera(f"cannot project point with Z = {p[2]}")
    return (cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy)


def project_points(points: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Vectorised projection of an (N, 3) array; raises on any Z <= 0."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = p[:, 2]
    if np.any(z <= 0.0):
        i = int(np.flatnonzero(z <= 0.0)[0])
        raise BehindCamera(f"point {i} has Z = {z[i]}")
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = cam.fx * p[:, 0] / z + cam.cx
    uv[:, 1] = cam.fy * p[:, 1] / z + cam.cy
    return uv


def back_project(pixel, depth: float, cam: CameraIntrinsics) -> np.ndarray:
    """Pixel (u, v) at the given depth -> camera-frame point (3,)."""
    if not depth > 0.0:
        raise NonPositiveDepth(f"cannot back-project depth {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array(
        [(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth]
    )


def depth_to_cloud(depth_map: DepthMap, cam: CameraIntrinsics) -> PointCloud:
    """Back-project every valid pixel, row-major order."""
    m = depth_map.mask
    d = depth_map.data
    vs, us = np.nonzero(m)  # row-major enumeration of valid pixels
    z = d[vs, us]
    pts = np.empty((z.size, 3))
    pts[:, 0] = (us - cam.cx) * z / cam.fx
    pts[:, 1] = (vs - cam.cy) * z / cam.fy
    pts[:, 2] = z
    return PointCloud(pts)


def cloud_pixel_indices(depth_map: DepthMap) -> np.ndarray:
    """Flat row-major pixel index of each point emitted by depth_to_cloud."""
    return np.flatnonzero(depth_map.mask.ravel())


def normals_from_depth(depth_map: DepthMap) -> NormalMap:
    """Raw (unnormalised) normals (-gx, -gy, 1) from forward differences."""
    g = image_gradients(depth_map.data)
    h, w = depth_map.data.shape
    n = np.empty((h, w, 3))
    n[:, :, 0] = -g.gx
    n[:, :, 1] = -g.gy
    n[:, :, 2] = 1.0
    return NormalMap(n)


# Shape index: curvatures come from the Hessian of the height field
# h = -depth, so a paraboloid patch d = d0 - r^2 (depth maximal at the
# centre) scores +1 and its mirror image scores -1.
_UMBILICAL_SPREAD = 1e-12
_UMBILICAL_FLOOR = 1e-9


def shape_index(depth_map: DepthMap) -> ShapeIndexMap:
    """Per-pixel shape index s = (2/pi) * atan((k1 + k2) / (k1 - k2)), k1 >= k2.

    Principal curvatures are the eigenvalues of the Hessian of h = -depth,
    estimated with central second differences, so only interior pixels with
    a fully valid 3x3 neighbourhood are defined.  Umbilical points
    (|k1 - k2| < 1e-12) are undefined unless both curvatures exceed 1e-9 in
    magnitude with equal sign, in which case s = sign(k1) (perfect cap/cup).
    """
    d = depth_map.data
    h, w = d.shape
    if h < 3 or w < 3:
        raise ShapeTooSmall(f"shape index needs at least 3x3, got {d.shape}")

    z = -d
    hxx = np.zeros_like(z)
    hyy = np.zeros_like(z)
    hxy = np.zeros_like(z)
    hxx[:, 1:-1] = z[:, 2:] - 2.0 * z[:, 1:-1] + z[:, :-2]
    hyy[1:-1, :] = z[2:, :] - 2.0 * z[1:-1, :] + z[:-2, :]
    hxy[1:-1, 1:-1] = 0.25 * (
        z[2:, 2:] - z[2:, :-2] - z[:-2, 2:] + z[:-2, :-2]
    )

    # Eigenvalues of [[hxx, hxy], [hxy, hyy]].
    mean = 0.5 * (hxx + hyy)
    half_spread = np.sqrt(np.maximum(0.25 * (hxx - hyy) ** 2 + hxy**2, 0.0))
    k1 = mean + half_spread
    k2 = mean - half_spread

    interior = np.zeros((h, w), dtype=bool)
    interior[1:-1, 1:-1] = True
    m = depth_map.mask
    # a pixel needs its full 3x3 neighbourhood valid
    full = np.zeros((h, w), dtype=bool)
    full[1:-1, 1:-1] = (
        m[1:-1, 1:-1]
        & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
        & m[:-2, :-2] & m[:-2, 2:] & m[2:, :-2] & m[2:, 2:]
    )

    spread = k1 - k2
    umbilical = spread < _UMBILICAL_SPREAD
    cap_or_cup = (
        umbilical
        & (np.abs(k1) > _UMBILICAL_FLOOR)
        & (np.abs(k2) > _UMBILICAL_FLOOR)
        & (np.sign(k1) == np.sign(k2))
    )

    with np.errstate(divide="ignore", invalid="ignore"):
        generic = (2.0 / np.pi) * np.arctan((k1 + k2) / spread)
    values = np.where(umbilical, np.sign(k1), generic)
    valid = interior & full & (~umbilical | cap_or_cup)
    values = np.where(valid, values, 0.0)
    return ShapeIndexMap(values, valid)
