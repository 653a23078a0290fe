"""Shared domain types, validation, and the deterministic random source.

Arrays are float64 in memory and are frozen (read-only) once a container
owns them.  Anything crossing a file boundary is float32; see ``io``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonPositiveDepth",
    "NonFiniteValue",
    "ShapeMismatch",
    "ShapeTooSmall",
    "BehindCamera",
    "EmptyCloud",
    "ResolutionTooSmall",
    "OutOfFrustum",
    "AllPointsOutOfFrustum",
    "EmptyOverlap",
    "ZeroMedian",
    "CameraOutsideLumen",
    "DivergedLoss",
    "MalformedHeader",
    "NegativeNonSentinel",
    "IoFailure",
    "DOMAIN_ERRORS",
    "Rng",
    "seeded_rng",
    "DepthMap",
    "RgbImage",
    "CameraIntrinsics",
    "default_intrinsics",
    "PointCloud",
    "LossWeights",
    "SdfGridSpec",
    "LossBreakdown",
    "validate_depth_map",
    "worker_count",
]


# ---------------------------------------------------------------------------
# Error taxonomy.  Every anticipated domain failure has a named class so
# callers (and the CLI) can branch on type instead of parsing messages.


class NonPositiveDepth(ValueError):
    """A depth value on a valid pixel is zero or negative."""


class NonFiniteValue(ValueError):
    """A value that must be finite is NaN or infinite."""


class ShapeMismatch(ValueError):
    """Two grids (or a grid and its mask) disagree in shape."""


class ShapeTooSmall(ValueError):
    """The operation needs a larger grid than was supplied."""


class BehindCamera(ValueError):
    """A point with Z <= 0 cannot be projected."""


class EmptyCloud(ValueError):
    """A point cloud with zero points was supplied."""


class ResolutionTooSmall(ValueError):
    """A sampling grid needs at least two samples per axis."""


class OutOfFrustum(ValueError):
    """A query point does not project onto a valid pixel."""


class AllPointsOutOfFrustum(ValueError):
    """No grid sample projects onto a valid pixel."""


class EmptyOverlap(ValueError):
    """Two maps share no valid pixels."""


class ZeroMedian(ValueError):
    """A median used as a scale factor is zero."""


class CameraOutsideLumen(ValueError):
    """The camera position is on or beyond the lumen wall."""


class DivergedLoss(RuntimeError):
    """The optimisation produced a non-finite loss."""


class MalformedHeader(ValueError):
    """A file header does not match the documented byte format."""


class NegativeNonSentinel(ValueError):
    """A depth file holds a negative value other than the -1.0 mask sentinel."""


class IoFailure(OSError):
    """A file could not be read or written."""


DOMAIN_ERRORS = (
    NonPositiveDepth,
    NonFiniteValue,
    ShapeMismatch,
    ShapeTooSmall,
    BehindCamera,
    EmptyCloud,
    ResolutionTooSmall,
    OutOfFrustum,
    AllPointsOutOfFrustum,
    EmptyOverlap,
    ZeroMedian,
    CameraOutsideLumen,
    DivergedLoss,
    MalformedHeader,
    NegativeNonSentinel,
    IoFailure,
)


# ---------------------------------------------------------------------------
# Deterministic random source.

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64_int(z: int) -> int:
    """splitmix64 finaliser on plain Python ints (reference path)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """Deterministic 64-bit stream, counter-based splitmix64.

    Draw ``i`` (1-based) is ``mix64((seed + i * 0x9E3779B97F4A7C15) mod 2**64)``
    where ``mix64`` is the splitmix64 finaliser::

        z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
        z ^= z >> 27;  z *= 0x94D049BB133111EB
        z ^= z >> 31

    The stream depends only on (seed, draw counter), so identical seeds give
    identical sequences on every platform, and a batch of ``n`` draws
    consumes exactly the counter positions of ``n`` scalar draws.
    Doubles take the top 53 bits: ``(z >> 11) * 2**-53`` in [0, 1).
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self._count = 0

    @property
    def seed(self) -> int:
        return self._seed

    def _raw(self, n: int) -> np.ndarray:
        counts = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        state = np.uint64(self._seed) + counts * np.uint64(_GAMMA)
        return _mix64_array(state)

    def next_u64(self) -> int:
        self._count += 1
        return _mix64_int((self._seed + self._count * _GAMMA) & _MASK64)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] via rejection-free modulo (hi - lo small)."""
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def normals(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """Standard-normal draws via Box-Muller.

        Consumes 2*ceil(n/2) uniforms: first the radial batch (mapped to
        (0, 1] so the log is finite), then the angular batch.
        """
        if n == 0:
            return np.zeros(0)
        m = (n + 1) // 2
        u1 = ((self._raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (self._raw(m) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * math.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(ang)
        out[1::2] = r * np.sin(ang)
        return sigma * out[:n]

    def spawn(self, index: int) -> "Rng":
        """Independent child stream; child seed is a documented pure function
        of (seed, index)."""
        child = _mix64_int(self._seed ^ _mix64_int(((index + 1) * _GAMMA) & _MASK64))
        return Rng(child)


def seeded_rng(seed: int) -> Rng:
    """The canonical way to obtain randomness anywhere in the package."""
    return Rng(seed)


# ---------------------------------------------------------------------------
# Containers.


def _freeze(a: np.ndarray) -> np.ndarray:
    """Private immutable copy; never locks the caller's buffer."""
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DepthMap:
    """H x W grid of camera-Z depths with an optional validity mask.

    ``data`` is row-major float64; valid pixels must hold finite positive
    values (checked by :func:`validate_depth_map`, not at construction).
    ``validity_mask`` is None for all-valid maps.
    """

    data: np.ndarray
    validity_mask: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ShapeMismatch(f"depth data must be 2D, got shape {d.shape}")
        object.__setattr__(self, "data", _freeze(d))
        if self.validity_mask is not None:
            m = np.asarray(self.validity_mask, dtype=bool)
            if m.shape != d.shape:
                raise ShapeMismatch(
                    f"mask shape {m.shape} does not match data shape {d.shape}"
                )
            object.__setattr__(self, "validity_mask", _freeze(m))

    @classmethod
    def from_flat(
        cls, width: int, height: int, values, mask=None
    ) -> "DepthMap":
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size != width * height:
            raise ShapeMismatch(
                f"expected {width * height} values for {width}x{height}, got {v.size}"
            )
        m = None
        if mask is not None:
            m = np.asarray(mask, dtype=bool).ravel()
            if m.size != width * height:
                raise ShapeMismatch(
                    f"mask holds {m.size} entries, expected {width * height}"
                )
            m = m.reshape(height, width)
        return cls(v.reshape(height, width), m)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def mask(self) -> np.ndarray:
        """Boolean validity grid (all True when no mask was stored)."""
        if self.validity_mask is None:
            return np.ones(self.data.shape, dtype=bool)
        return self.validity_mask

    @property
    def n_valid(self) -> int:
        if self.validity_mask is None:
            return self.data.size
        return int(self.validity_mask.sum())


@dataclass(frozen=True)
class RgbImage:
    """H x W x 3 image, channels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ShapeMismatch(f"rgb data must be (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise NonFiniteValue("rgb image holds non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("rgb values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; pixel (u, v) = (column, row) at integer centres."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise NonFiniteValue(f"intrinsic {name} is not finite")


def default_intrinsics(width: int, height: int) -> CameraIntrinsics:
    """fx = fy = max(W, H)/2 with the principal point at the pixel-grid centre."""
    f = max(width, height) / 2.0
    return CameraIntrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


@dataclass(frozen=True)
class PointCloud:
    """N x 3 array of finite 3D points."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ShapeMismatch(f"points must be (N, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise NonFiniteValue("point cloud holds non-finite coordinates")
        object.__setattr__(self, "points", _freeze(p))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class LossWeights:
    """Term weights for the combined loss; all >= 0, not all zero."""

    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.1

    def __post_init__(self):
        ws = (self.lambda1, self.lambda2, self.lambda3)
        if any(not math.isfinite(w) for w in ws):
            raise NonFiniteValue("loss weights must be finite")
        if any(w < 0.0 for w in ws):
            raise ValueError(f"loss weights must be >= 0, got {ws}")
        if all(w == 0.0 for w in ws):
            raise ValueError("at least one loss weight must be positive")


MAX_GRID_SAMPLES = 2**20


@dataclass(frozen=True)
class SdfGridSpec:
    """Axis-aligned sampling lattice: bounds plus per-axis resolutions."""

    x_lb: np.ndarray
    x_ub: np.ndarray
    rx: int
    ry: int
    rz: int
    max_samples: int = MAX_GRID_SAMPLES

    def __post_init__(self):
        lb = np.asarray(self.x_lb, dtype=np.float64).reshape(3)
        ub = np.asarray(self.x_ub, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise NonFiniteValue("grid bounds must be finite")
        object.__setattr__(self, "x_lb", _freeze(lb))
        object.__setattr__(self, "x_ub", _freeze(ub))
        if min(self.rx, self.ry, self.rz) < 2:
            raise ResolutionTooSmall(
                f"need >= 2 samples per axis, got ({self.rx}, {self.ry}, {self.rz})"
            )
        if not np.all(ub > lb):
            raise ValueError(f"upper bound must strictly dominate lower: {lb} vs {ub}")
        n = self.rx * self.ry * self.rz
        if n > self.max_samples:
            raise ValueError(f"{n} samples exceed the configured maximum {self.max_samples}")

    @property
    def n_samples(self) -> int:
        return self.rx * self.ry * self.rz


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values, their weighted total, and the optional pixel gradient.

    The total must reconstruct from the parts:
    lambda1*(depth + smooth) + lambda2*(grad + normal) + lambda3*sdf,
    within 1e-12 relative; construction enforces it.
    """

    depth: float
    smooth: float
    grad: float
    normal: float
    sdf: float
    total: float
    weights: LossWeights
    gradient: np.ndarray | None = None

    def __post_init__(self):
        parts = (self.depth, self.smooth, self.grad, self.normal, self.sdf)
        if any(not math.isfinite(p) for p in parts) or not math.isfinite(self.total):
            raise NonFiniteValue(f"loss terms must be finite, got {parts} -> {self.total}")
        if any(p < 0.0 for p in parts):
            raise ValueError(f"loss terms must be >= 0, got {parts}")
        w = self.weights
        recon = w.lambda1 * (self.depth + self.smooth) + w.lambda2 * (
            self.grad + self.normal
        ) + w.lambda3 * self.sdf
        tol = 1e-12 * max(1.0, abs(recon), abs(self.total))
        if abs(recon - self.total) > tol:
            raise ValueError(f"total {self.total} does not reconstruct from parts ({recon})")
        if self.gradient is not None:
            g = np.asarray(self.gradient, dtype=np.float64)
            object.__setattr__(self, "gradient", _freeze(g))

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "smooth": self.smooth,
            "grad": self.grad,
            "normal": self.normal,
            "sdf": self.sdf,
            "total": self.total,
        }


# ---------------------------------------------------------------------------
# Validation and environment.


def validate_depth_map(depth_map: DepthMap) -> DepthMap:
    """Check every valid pixel holds a finite positive value.

    Raises NonFiniteValue / NonPositiveDepth naming the first offending
    pixel in flat row-major order.  Idempotent; returns its argument.
    """
    d = depth_map.data
    m = depth_map.mask
    flat_d = d.ravel()
    flat_m = m.ravel()
    bad = flat_m & ~np.isfinite(flat_d)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"non-finite depth {flat_d[i]} at flat index {i}")
    bad = flat_m & (flat_d <= 0.0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonPositiveDepth(f"non-positive depth {flat_d[i]} at flat index {i}")
    return depth_map


def worker_count() -> int:
    """Worker bound from ENDOGEO_THREADS (unset or 0 selects auto, currently 1).

    Array math is vectorised and already saturates a core, so auto stays
    single-threaded; values > 1 chunk renderer rows across threads.  Results
    never depend on this number.
    """
    raw = os.environ.get("ENDOGEO_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ENDOGEO_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError(f"ENDOGEO_THREADS must be >= 0, got {n}")
    return n if n > 0 else 1
