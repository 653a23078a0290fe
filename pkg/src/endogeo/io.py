"""Byte-exact file formats: grayscale PFM depth, binary PPM colour, ascii PLY.

PFM files here are always grayscale ("Pf"), float32, little-endian (scale
line "-1.0"), rows stored bottom-to-top.  Depth maps use negative values
only for the -1.0 invalid-pixel sentinel; the raw-grid variants carry
arbitrary finite float32 data (e.g. gradients) with no sentinel semantics.
"""

from __future__ import annotations

import os

import numpy as np

from .core import (
    DepthMap,
    IoFailure,
    MalformedHeader,
    NegativeNonSentinel,
    NonFiniteValue,
    PointCloud,
    RgbImage,
    ShapeMismatch,
)

__all__ = [
    "write_pfm_grid",
    "read_pfm_grid",
    "write_depth_pfm",
    "read_depth_pfm",
    "write_rgb_ppm",
    "read_rgb_ppm",
    "write_cloud_ply",
]

_MASK_SENTINEL = -1.0
_MASKED_READ_VALUE = 1.0  # placeholder stored on masked pixels after a read


def _write_bytes(path, payload: bytes) -> None:
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


def write_pfm_grid(values: np.ndarray, path) -> None:
    """Raw (H, W) float grid -> grayscale PFM, any finite values allowed."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeMismatch(f"PFM grid must be 2D, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue("PFM payload must be finite")
    h, w = v.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    payload = np.flipud(v).astype("<f4").tobytes()
    _write_bytes(path, header + payload)


def read_pfm_grid(path) -> np.ndarray:
    """Grayscale little-endian PFM -> (H, W) float64 grid."""
    blob = _read_bytes(path)
    # header: three whitespace-terminated fields (type, "W H", scale)
    parts = blob.split(b"\n", 3)
    if len(parts) < 4:
        raise MalformedHeader(f"{path}: truncated PFM header")
    magic, dims, scale_s, body = parts
    if magic == b"PF":
        raise MalformedHeader(f"{path}: colour PFM not supported, expected 'Pf'")
    if magic != b"Pf":
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    try:
        w, h = (int(t) for t in dims.split())
        scale = float(scale_s)
    except ValueError as e:
        raise MalformedHeader(f"{path}: unparseable dimensions or scale") from e
    if w < 1 or h < 1:
        raise MalformedHeader(f"{path}: bad dimensions {w}x{h}")
    if scale >= 0.0:
        raise MalformedHeader(f"{path}: only little-endian (negative scale) supported")
    expected = w * h * 4
    if len(body) != expected:
        raise MalformedHeader(f"{path}: payload holds {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return np.flipud(flat.reshape(h, w)).copy()


def write_depth_pfm(depth_map: DepthMap, path) -> None:
    """Depth map -> PFM; invalid pixels are stored as the -1.0 sentinel."""
    data = np.where(depth_map.mask, depth_map.data, _MASK_SENTINEL)
    write_pfm_grid(data, path)


def read_depth_pfm(path) -> DepthMap:
    """PFM -> depth map; -1.0 marks invalid pixels, other negatives reject.

    Masked pixels read back with a positive placeholder value so the map
    always revalidates; rewriting restores the sentinel bytes.
    """
    grid = read_pfm_grid(path)
    negative = grid < 0.0
    sentinel = grid == np.float64(np.float32(_MASK_SENTINEL))
    bad = negative & ~sentinel
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise NegativeNonSentinel(
            f"{path}: negative value {grid[r, c]} at pixel ({int(c)}, {int(r)})"
        )
    if sentinel.any():
        mask = ~sentinel
        data = np.where(mask, grid, _MASKED_READ_VALUE)
        return DepthMap(data, mask)
    return DepthMap(grid)


def write_rgb_ppm(image: RgbImage, path) -> None:
    """RGB [0, 1] floats -> binary PPM (maxval 255, half-up quantisation)."""
    q = np.floor(image.data * 255.0 + 0.5)
    q = np.clip(q, 0.0, 255.0).astype(np.uint8)
    h, w = image.data.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    _write_bytes(path, header + q.tobytes())


def read_rgb_ppm(path) -> RgbImage:
    """Binary PPM (maxval 255) -> RGB floats in [0, 1]."""
    blob = _read_bytes(path)
    parts = blob.split(b"\n", 3)
    if len(parts) < 4:
        raise MalformedHeader(f"{path}: truncated PPM header")
    magic, dims, maxval_s, body = parts
    if magic != b"P6":
        raise MalformedHeader(f"{path}: bad magic {magic!r}, expected 'P6'")
    try:
        w, h = (int(t) for t in dims.split())
        maxval = int(maxval_s)
    except ValueError as e:
        raise MalformedHeader(f"{path}: unparseable dimensions or maxval") from e
    if maxval != 255:
        raise MalformedHeader(f"{path}: only maxval 255 supported, got {maxval}")
    expected = w * h * 3
    if len(body) != expected:
        raise MalformedHeader(f"{path}: payload holds {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).astype(np.float64)
    return RgbImage(data / 255.0)


def write_cloud_ply(cloud: PointCloud, path) -> None:
    """Point cloud -> ascii PLY with float x/y/z, 9 significant digits."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    for p in cloud.points:
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    _write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))
