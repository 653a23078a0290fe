"""Procedural lumen generator: analytic tube walls, sphere-traced depth,
and camera-co-located lighting.

A scene is a tube around a cubic-in-z centerline whose radius is modulated
by sinusoidal folds and subtracted Gaussian bumps.  The wall gauge
``wall_distance`` (positive inside the lumen, zero on the wall) drives both
ray marching and the geometric ground truth that rendered depth maps are
tested against.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    CameraIntrinsics,
    CameraOutsideLumen,
    DepthMap,
    IoFailure,
    MalformedHeader,
    NonFiniteValue,
    RgbImage,
    Rng,
    _freeze,
    default_intrinsics,
    seeded_rng,
    worker_count,
)
from .core import _mix64_array
from .io import write_depth_pfm, write_rgb_ppm

__all__ = [
    "Centerline",
    "SceneModel",
    "CameraPose",
    "LightingModel",
    "FramePair",
    "PRESETS",
    "wall_distance",
    "wall_normals",
    "generate_scene",
    "pose_inside",
    "pose_facing_wall",
    "trace_rays",
    "value_noise",
    "shade",
    "render_frame",
    "DatasetConfig",
    "generate_dataset",
    "regenerate_dataset",
    "luminance",
]

FAR_DEPTH = 100.0
NEAR_DEPTH = 0.01
TRACE_TOL = 1e-5
TRACE_MAX_STEPS = 256
TRACE_T_MAX = 150.0
NOISE_SCALE = 2.5


@dataclass(frozen=True)
class Centerline:
    """Tube axis (cx(z), cy(z), z) with cubic polynomial offsets."""

    coeffs_x: tuple[float, float, float, float]  # a0 + a1 z + a2 z^2 + a3 z^3
    coeffs_y: tuple[float, float, float, float]

    def offset(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ax = self.coeffs_x
        ay = self.coeffs_y
        x = ((ax[3] * z + ax[2]) * z + ax[1]) * z + ax[0]
        y = ((ay[3] * z + ay[2]) * z + ay[1]) * z + ay[0]
        return x, y

    def slope(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ax = self.coeffs_x
        ay = self.coeffs_y
        x = (3.0 * ax[3] * z + 2.0 * ax[2]) * z + ax[1]
        y = (3.0 * ay[3] * z + 2.0 * ay[2]) * z + ay[1]
        return x, y

    def point(self, z: float) -> np.ndarray:
        x, y = self.offset(np.asarray(z, dtype=np.float64))
        return np.array([float(x), float(y), float(z)])


@dataclass(frozen=True)
class SceneModel:
    """Full description of one lumen.

    Radius law: R * (1 + fold_amplitude * sin(fold_frequency * z + fold_phase)
    * cos(fold_lobes * theta + fold_phase2)) minus Gaussian bumps
    (rows of ``bumps``: z, theta, amplitude, width).  The worst-case radius
    must stay clearly positive or construction fails.
    """

    centerline: Centerline
    base_radius: float
    fold_amplitude: float
    fold_frequency: float
    fold_lobes: int
    fold_phase: float
    fold_phase2: float
    bumps: np.ndarray
    texture_seed: int
    base_color: tuple[float, float, float]
    texture_contrast: float

    def __post_init__(self):
        b = np.asarray(self.bumps, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "bumps", _freeze(b))
        if self.base_radius <= 0.0:
            raise ValueError(f"base radius must be positive, got {self.base_radius}")
        if not (0.0 <= self.fold_amplitude < 1.0):
            raise ValueError(f"fold amplitude out of range: {self.fold_amplitude}")
        if np.any(b[:, 2] < 0.0) or np.any(b[:, 3] <= 0.0):
            raise ValueError("bump amplitudes must be >= 0 and widths > 0")
        worst = self.base_radius * (1.0 - self.fold_amplitude) - float(b[:, 2].sum())
        if worst <= 0.05 * self.base_radius:
            raise ValueError(
                f"wall can pinch shut: worst-case radius {worst} vs base {self.base_radius}"
            )


def wall_distance(scene: SceneModel, points: np.ndarray) -> np.ndarray:
    """Radial gauge r(z, theta) - rho: positive inside the lumen, zero on
    the wall, negative beyond it.  Accepts (..., 3) arrays."""
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    cx, cy = scene.centerline.offset(z)
    dx = pts[..., 0] - cx
    dy = pts[..., 1] - cy
    rho = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    mod = np.sin(scene.fold_frequency * z + scene.fold_phase)
    if scene.fold_lobes > 0:
        mod = mod * np.cos(scene.fold_lobes * theta + scene.fold_phase2)
    r = scene.base_radius * (1.0 + scene.fold_amplitude * mod)
    two_pi = 2.0 * math.pi
    for zb, tb, amp, width in scene.bumps:
        dtheta = theta - tb
        dtheta = dtheta - two_pi * np.round(dtheta / two_pi)
        d2 = (z - zb) ** 2 + (scene.base_radius * dtheta) ** 2
        r = r - amp * np.exp(-d2 / (2.0 * width**2))
    return r - rho


def wall_normals(scene: SceneModel, points: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Unit normals on (or near) the wall, oriented into the lumen
    (the gauge increases toward the interior)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    grad = np.empty_like(pts)
    for a in range(3):
        shift = np.zeros(3)
        shift[a] = h
        grad[:, a] = (
            wall_distance(scene, pts + shift) - wall_distance(scene, pts - shift)
        ) / (2.0 * h)
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    norm = np.where(norm == 0.0, 1.0, norm)
    return grad / norm


@dataclass(frozen=True)
class CameraPose:
    """Rigid camera placement; rotation columns are the camera axes
    (x right, y down, z forward) expressed in world coordinates."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
            raise NonFiniteValue("pose holds non-finite values")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0.0:
            raise ValueError("rotation must be a proper orthonormal matrix")
        object.__setattr__(self, "position", _freeze(p))
        object.__setattr__(self, "rotation", _freeze(r))

    @classmethod
    def looking(cls, position, forward, hint=(0.0, 1.0, 0.0)) -> "CameraPose":
        """Pose with +z along ``forward``; ``hint`` picks the roll (swapped
        for x when near-parallel to the view direction)."""
        f = np.asarray(forward, dtype=np.float64)
        f = f / np.linalg.norm(f)
        h = np.asarray(hint, dtype=np.float64)
        if abs(float(f @ h)) > 0.9 * np.linalg.norm(h):
            h = np.array([1.0, 0.0, 0.0])
        right = np.cross(h, f)
        right = right / np.linalg.norm(right)
        down = np.cross(f, right)
        return cls(np.asarray(position, dtype=np.float64), np.stack([right, down, f], axis=1))


@dataclass(frozen=True)
class LightingModel:
    """Point light co-located with the camera plus an ambient floor."""

    intensity: float = 1.2
    color: tuple[float, float, float] = (1.0, 0.96, 0.9)
    ambient: float = 0.08
    specular_strength: float = 0.4
    specular_exponent: float = 24.0

    def __post_init__(self):
        if self.intensity < 0.0 or self.ambient < 0.0 or self.specular_strength < 0.0:
            raise ValueError("lighting magnitudes must be >= 0")
        if self.specular_exponent < 1.0:
            raise ValueError(f"specular exponent must be >= 1, got {self.specular_exponent}")
        if any(not (0.0 <= c <= 1.0) for c in self.color):
            raise ValueError(f"light colour out of [0, 1]: {self.color}")


@dataclass(frozen=True)
class FramePair:
    """One rendered view: colour, depth (misses masked), and the pose."""

    rgb: RgbImage
    depth: DepthMap
    pose: CameraPose


# ---------------------------------------------------------------------------
# Presets.  Ranges are the documented contract: e.g. every stomach-like
# scene folds more slowly along z than any colon-like one.


@dataclass(frozen=True)
class PresetSpec:
    radius_range: tuple[float, float]
    fold_amplitude_range: tuple[float, float]
    fold_frequency_range: tuple[float, float]
    fold_lobes: int
    bump_count_range: tuple[int, int]
    bump_amplitude_range: tuple[float, float]
    bump_width_range: tuple[float, float]
    base_color: tuple[float, float, float]
    texture_contrast: float


PRESETS: dict[str, PresetSpec] = {
    # wide chamber, slow longitudinal ridges (4 lobes), few bumps
    "stomach-like": PresetSpec(
        radius_range=(1.2, 1.6),
        fold_amplitude_range=(0.10, 0.18),
        fold_frequency_range=(0.8, 1.4),
        fold_lobes=4,
        bump_count_range=(0, 2),
        bump_amplitude_range=(0.05, 0.12),
        bump_width_range=(0.35, 0.6),
        base_color=(0.82, 0.52, 0.45),
        texture_contrast=0.22,
    ),
    # medium bore with pronounced ring folds
    "colon-like": PresetSpec(
        radius_range=(0.9, 1.3),
        fold_amplitude_range=(0.18, 0.28),
        fold_frequency_range=(3.0, 4.5),
        fold_lobes=0,
        bump_count_range=(1, 3),
        bump_amplitude_range=(0.06, 0.14),
        bump_width_range=(0.25, 0.5),
        base_color=(0.88, 0.56, 0.50),
        texture_contrast=0.28,
    ),
    # narrow tube, dense rings, many small papilla-like bumps
    "duodenum-like": PresetSpec(
        radius_range=(0.7, 1.0),
        fold_amplitude_range=(0.12, 0.20),
        fold_frequency_range=(4.5, 6.5),
        fold_lobes=0,
        bump_count_range=(3, 6),
        bump_amplitude_range=(0.04, 0.09),
        bump_width_range=(0.18, 0.4),
        base_color=(0.85, 0.60, 0.42),
        texture_contrast=0.3,
    ),
}

BUMP_Z_SPAN = 3.0  # bump centres land in [-3, 3] along the tube


def generate_scene(seed: int, preset: str) -> SceneModel:
    """Deterministic scene from (seed, preset name)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, pick from {sorted(PRESETS)}")
    spec = PRESETS[preset]
    rng = seeded_rng(seed)
    radius = rng.uniform(*spec.radius_range)
    amp = rng.uniform(*spec.fold_amplitude_range)
    freq = rng.uniform(*spec.fold_frequency_range)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    phase2 = rng.uniform(0.0, 2.0 * math.pi)
    cl = Centerline(
        coeffs_x=(0.0, rng.uniform(-0.12, 0.12), rng.uniform(-0.01, 0.01), rng.uniform(-0.002, 0.002)),
        coeffs_y=(0.0, rng.uniform(-0.12, 0.12), rng.uniform(-0.01, 0.01), rng.uniform(-0.002, 0.002)),
    )
    n_bumps = rng.integer(*spec.bump_count_range)
    bumps = np.zeros((n_bumps, 4))
    # cap the total protrusion so the wall clearance budget in SceneModel
    # always holds regardless of the draw
    amp_budget = 0.4 * radius * (1.0 - amp)
    for i in range(n_bumps):
        bumps[i, 0] = rng.uniform(-BUMP_Z_SPAN, BUMP_Z_SPAN)
        bumps[i, 1] = rng.uniform(0.0, 2.0 * math.pi)
        a = rng.uniform(*spec.bump_amplitude_range)
        bumps[i, 2] = min(a, amp_budget / max(n_bumps, 1))
        bumps[i, 3] = rng.uniform(*spec.bump_width_range)
    color = tuple(
        float(np.clip(c + rng.uniform(-0.04, 0.04), 0.05, 0.95)) for c in spec.base_color
    )
    return SceneModel(
        centerline=cl,
        base_radius=radius,
        fold_amplitude=amp,
        fold_frequency=freq,
        fold_lobes=spec.fold_lobes,
        fold_phase=phase,
        fold_phase2=phase2,
        bumps=bumps,
        texture_seed=rng.next_u64(),
        base_color=color,
        texture_contrast=spec.texture_contrast,
    )


def pose_inside(scene: SceneModel, rng: Rng) -> CameraPose:
    """Random pose with guaranteed clearance, looking down-tube at a point
    jittered off the axis so walls stay in view."""
    z0 = rng.uniform(-1.5, 1.5)
    ang = rng.uniform(0.0, 2.0 * math.pi)
    frac = rng.uniform(0.0, 0.35)
    ahead = rng.uniform(1.5, 3.0)
    jx = rng.uniform(-0.4, 0.4) * scene.base_radius
    jy = rng.uniform(-0.4, 0.4) * scene.base_radius

    base = scene.centerline.point(z0)
    inner = scene.base_radius * (1.0 - scene.fold_amplitude)
    offset = np.array([math.cos(ang), math.sin(ang), 0.0]) * inner
    position = base + frac * offset
    for _ in range(10):  # deterministic shrink until clearance is comfortable
        if wall_distance(scene, position[None, :])[0] > 0.3 * scene.base_radius:
            break
        frac *= 0.5
        position = base + frac * offset
    target = scene.centerline.point(z0 + ahead) + np.array([jx, jy, 0.0])
    return CameraPose.looking(position, target - position)


def pose_facing_wall(
    scene: SceneModel,
    z: float = 0.0,
    azimuth: float = 0.0,
    clearance_frac: float = 0.45,
    tilt: float = 0.2,
) -> CameraPose:
    """Close-inspection pose: camera near the axis looking radially at the
    wall, with a slight axial tilt.

    Keeps the whole frame on nearby wall (no down-tube horizon), the usual
    view when examining mucosa up close.  The radial offset shrinks until
    wall clearance exceeds 0.15 R, so deep bumps cannot strand the camera.
    """
    base = scene.centerline.point(z)
    outward = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    frac = clearance_frac
    position = base + frac * scene.base_radius * outward
    for _ in range(10):
        if wall_distance(scene, position[None, :])[0] > 0.15 * scene.base_radius:
            break
        frac *= 0.5
        position = base + frac * scene.base_radius * outward
    forward = scene.base_radius * outward + np.array([0.0, 0.0, tilt])
    return CameraPose.looking(position, forward)


# ---------------------------------------------------------------------------
# Ray marching.


def trace_rays(
    scene: SceneModel,
    origins: np.ndarray,
    dirs: np.ndarray,
    tol: float = TRACE_TOL,
    max_steps: int = TRACE_MAX_STEPS,
    t_max: float = TRACE_T_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """March unit rays against the wall gauge: (hit mask, ray parameter).

    Steps are 0.6 * gauge (the full gauge below 5e-3, where overshooting is
    harmless); a sign crossing brackets the wall and 50 bisection rounds pin
    it down, so accepted hits satisfy |gauge| <= ``tol``.  Rays that exceed
    ``t_max`` or never converge are misses.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = o.shape[0]
    t = np.zeros(n)
    t_lo = np.zeros(n)
    t_hi = np.zeros(n)
    status = np.zeros(n, dtype=np.int8)  # 0 marching, 1 hit, 2 miss, 3 bracket

    for _ in range(max_steps):
        act = np.flatnonzero(status == 0)
        if act.size == 0:
            break
        f = wall_distance(scene, o[act] + t[act, None] * d[act])
        hit = (f >= 0.0) & (f < tol)
        cross = f < 0.0
        status[act[hit]] = 1
        brk = act[cross]
        status[brk] = 3
        t_hi[brk] = t[brk]
        go = ~(hit | cross)
        rows = act[go]
        fg = f[go]
        t_lo[rows] = t[rows]
        t[rows] = t[rows] + np.where(fg < 5e-3, fg, 0.6 * fg)
        status[rows[t[rows] > t_max]] = 2
    status[status == 0] = 2

    b = np.flatnonzero(status == 3)
    if b.size:
        lo = t_lo[b]
        hi = t_hi[b]
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            ge = wall_distance(scene, o[b] + mid[:, None] * d[b]) >= 0.0
            lo = np.where(ge, mid, lo)
            hi = np.where(ge, hi, mid)
        tb = 0.5 * (lo + hi)
        fb = wall_distance(scene, o[b] + tb[:, None] * d[b])
        t[b] = tb
        status[b] = np.where(np.abs(fb) <= tol, 1, 2)
    return status == 1, t


# ---------------------------------------------------------------------------
# Texture and shading.


def _lattice_values(ix, iy, iz, salt: int) -> np.ndarray:
    h = (
        ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        ^ iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        ^ iz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
        ^ np.uint64(salt & ((1 << 64) - 1))
    )
    return (_mix64_array(h) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def value_noise(points: np.ndarray, seed: int, octaves: int = 3) -> np.ndarray:
    """Trilinear lattice value noise in [0, 1), three octaves by default."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(pts.shape[0])
    amp_sum = 0.0
    for o in range(octaves):
        p = pts * (2.0**o)
        base = np.floor(p)
        frac = p - base
        w = frac * frac * (3.0 - 2.0 * frac)  # smoothstep
        i0 = base.astype(np.int64)
        acc = np.zeros(pts.shape[0])
        for corner in range(8):
            ox, oy, oz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            vals = _lattice_values(
                i0[:, 0] + ox, i0[:, 1] + oy, i0[:, 2] + oz, seed + 0x5851F42D * o
            )
            wx = w[:, 0] if ox else 1.0 - w[:, 0]
            wy = w[:, 1] if oy else 1.0 - w[:, 1]
            wz = w[:, 2] if oz else 1.0 - w[:, 2]
            acc += vals * wx * wy * wz
        amp = 0.5**o
        out += amp * acc
        amp_sum += amp
    return out / amp_sum


def shade(
    normals: np.ndarray,
    to_light: np.ndarray,
    distances: np.ndarray,
    albedo: np.ndarray,
    lighting: LightingModel,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ambient, diffuse, and specular components (N, 3), before clipping.

    The light rides on the camera, so ``to_light`` doubles as the view
    direction and the specular half-vector collapses onto the normal dot."""
    ndl = np.maximum(np.einsum("ij,ij->i", normals, to_light), 0.0)
    falloff = 1.0 / (1.0 + distances**2)
    color = np.asarray(lighting.color)
    ambient = lighting.ambient * albedo
    diffuse = lighting.intensity * falloff[:, None] * ndl[:, None] * albedo * color
    specular = (
        lighting.intensity
        * lighting.specular_strength
        * falloff[:, None]
        * (ndl[:, None] ** lighting.specular_exponent)
        * color
    )
    return ambient, diffuse, specular


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (..., 3) array."""
    a = np.asarray(rgb, dtype=np.float64)
    return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]


# ---------------------------------------------------------------------------
# Rendering.


def render_frame(
    scene: SceneModel,
    pose: CameraPose,
    lighting: LightingModel,
    cam: CameraIntrinsics | None = None,
    width: int = 320,
    height: int = 320,
) -> FramePair:
    """Ray-cast one view: colour image plus depth with misses masked.

    Depth is camera Z.  Hits nearer than 0.01 or beyond 100 are treated as
    misses; miss pixels store 100 with a False validity flag and render
    black.  ENDOGEO_THREADS > 1 chunks rows across threads (per-ray math is
    independent, so the output never depends on it).
    """
    if cam is None:
        cam = default_intrinsics(width, height)
    clearance = float(wall_distance(scene, pose.position[None, :])[0])
    if clearance <= NEAR_DEPTH:
        raise CameraOutsideLumen(f"clearance {clearance} at {pose.position}")

    us, vs = np.meshgrid(np.arange(width), np.arange(height))
    dirs_cam = np.stack(
        [
            (us.ravel() - cam.cx) / cam.fx,
            (vs.ravel() - cam.cy) / cam.fy,
            np.ones(width * height),
        ],
        axis=1,
    )
    norms = np.linalg.norm(dirs_cam, axis=1)
    dirs_world = (dirs_cam / norms[:, None]) @ pose.rotation.T
    origins = np.broadcast_to(pose.position, dirs_world.shape)

    workers = worker_count()
    if workers > 1:
        chunks = np.array_split(np.arange(dirs_world.shape[0]), workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(
                ex.map(
                    lambda c: trace_rays(scene, origins[c], dirs_world[c]),
                    chunks,
                )
            )
        hit = np.concatenate([p[0] for p in parts])
        t = np.concatenate([p[1] for p in parts])
    else:
        hit, t = trace_rays(scene, origins, dirs_world)

    depth = t / norms
    valid = hit & (depth >= NEAR_DEPTH) & (depth <= FAR_DEPTH)
    depth_vals = np.where(valid, depth, FAR_DEPTH)
    depth_map = DepthMap(depth_vals.reshape(height, width), valid.reshape(height, width))

    rgb = np.zeros((width * height, 3))
    if valid.any():
        pts = pose.position + t[valid, None] * dirs_world[valid]
        normals = wall_normals(scene, pts)
        view = -dirs_world[valid]
        tex = value_noise(pts * NOISE_SCALE, scene.texture_seed)
        albedo = np.asarray(scene.base_color) * (
            1.0 + scene.texture_contrast * (2.0 * tex[:, None] - 1.0)
        )
        albedo = np.clip(albedo, 0.02, 1.0)
        amb, dif, spe = shade(normals, view, t[valid], albedo, lighting)
        rgb[valid] = np.clip(amb + dif + spe, 0.0, 1.0)
    return FramePair(
        rgb=RgbImage(rgb.reshape(height, width, 3)),
        depth=depth_map,
        pose=pose,
    )


# ---------------------------------------------------------------------------
# Datasets and the regeneration manifest.

_MANIFEST_MAGIC = "endogeo-manifest 1"


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 10
    presets: tuple[str, ...] = ("stomach-like", "colon-like", "duodenum-like")
    seed: int = 0
    width: int = 320
    height: int = 320
    intensity_range: tuple[float, float] = (0.8, 1.6)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        for p in self.presets:
            if p not in PRESETS:
                raise ValueError(f"unknown preset {p!r}")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"frames must be at least 2x2, got {self.width}x{self.height}")


def _sample_lighting(rng: Rng, intensity_range) -> LightingModel:
    return LightingModel(
        intensity=rng.uniform(*intensity_range),
        color=(1.0, 0.96 - rng.uniform(0.0, 0.06), 0.88 - rng.uniform(0.0, 0.1)),
        ambient=rng.uniform(0.05, 0.12),
        specular_strength=rng.uniform(0.25, 0.5),
        specular_exponent=rng.uniform(12.0, 40.0),
    )


def _frame_names(index: int) -> tuple[str, str]:
    return f"rgb_{index:04d}.ppm", f"depth_{index:04d}.pfm"


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _header_lines(count: int, width: int, height: int, cam: CameraIntrinsics) -> list[str]:
    return [
        _MANIFEST_MAGIC,
        f"count {count}",
        f"size {width} {height}",
        f"intrinsics {_floats((cam.fx, cam.fy, cam.cx, cam.cy))}",
    ]


def _frame_line(
    index: int,
    preset: str,
    scene_seed: int,
    pose: CameraPose,
    lighting: LightingModel,
    rgb_name: str,
    depth_name: str,
) -> str:
    light = (
        lighting.intensity,
        *lighting.color,
        lighting.ambient,
        lighting.specular_strength,
        lighting.specular_exponent,
    )
    return (
        f"frame {index} preset {preset} scene_seed {scene_seed} "
        f"pos {_floats(pose.position)} rot {_floats(pose.rotation.ravel())} "
        f"light {_floats(light)} "
        f"rgb {rgb_name} depth {depth_name}"
    )


def generate_dataset(config: DatasetConfig, out_dir) -> str:
    """Render a dataset and write it plus a regeneration manifest.

    Every stochastic choice is a pure function of the config seed; the
    manifest stores scene seeds and exact pose/lighting floats so
    :func:`regenerate_dataset` reproduces each file byte for byte.
    """
    os.makedirs(out_dir, exist_ok=True)
    cam = default_intrinsics(config.width, config.height)
    master = seeded_rng(config.seed)
    lines = _header_lines(config.count, config.width, config.height, cam)
    for i in range(config.count):
        frame_rng = master.spawn(i)
        preset = config.presets[i % len(config.presets)]
        scene_seed = frame_rng.next_u64()
        scene = generate_scene(scene_seed, preset)
        pose = pose_inside(scene, frame_rng)
        lighting = _sample_lighting(frame_rng, config.intensity_range)
        frame = render_frame(
            scene, pose, lighting, cam, width=config.width, height=config.height
        )
        rgb_name, depth_name = _frame_names(i)
        write_rgb_ppm(frame.rgb, os.path.join(out_dir, rgb_name))
        write_depth_pfm(frame.depth, os.path.join(out_dir, depth_name))
        lines.append(
            _frame_line(i, preset, scene_seed, pose, lighting, rgb_name, depth_name)
        )
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
    return manifest


def _parse_manifest(path) -> dict:
    try:
        with open(path, "r", encoding="ascii") as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if not lines or lines[0] != _MANIFEST_MAGIC:
        raise MalformedHeader(f"{path}: not a dataset manifest")
    header = {}
    frames = []
    for ln in lines[1:]:
        toks = ln.split()
        if toks[0] == "count":
            header["count"] = int(toks[1])
        elif toks[0] == "size":
            header["width"], header["height"] = int(toks[1]), int(toks[2])
        elif toks[0] == "intrinsics":
            header["intrinsics"] = [float(t) for t in toks[1:5]]
        elif toks[0] == "frame":
            if (
                toks[2] != "preset"
                or toks[4] != "scene_seed"
                or toks[6] != "pos"
                or toks[10] != "rot"
                or toks[20] != "light"
                or toks[28] != "rgb"
                or toks[30] != "depth"
            ):
                raise MalformedHeader(f"{path}: malformed frame line: {ln}")
            frames.append(
                {
                    "index": int(toks[1]),
                    "preset": toks[3],
                    "scene_seed": int(toks[5]),
                    "pos": [float(t) for t in toks[7:10]],
                    "rot": [float(t) for t in toks[11:20]],
                    "light": [float(t) for t in toks[21:28]],
                    "rgb": toks[29],
                    "depth": toks[31],
                }
            )
        else:
            raise MalformedHeader(f"{path}: unknown manifest line: {ln}")
    for key in ("count", "width", "height", "intrinsics"):
        if key not in header:
            raise MalformedHeader(f"{path}: missing {key}")
    if len(frames) != header["count"]:
        raise MalformedHeader(
            f"{path}: {len(frames)} frame lines for count {header['count']}"
        )
    header["frames"] = frames
    return header


def regenerate_dataset(manifest_path, out_dir) -> list[str]:
    """Re-render every frame listed in a manifest into ``out_dir``.

    Outputs (frames and the re-emitted manifest) are byte-identical to the
    originals: scenes rebuild from their stored seeds, poses and lighting
    from their exact stored floats.
    """
    info = _parse_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)
    fx, fy, cx, cy = info["intrinsics"]
    cam = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
    lines = _header_lines(info["count"], info["width"], info["height"], cam)
    written = []
    for fr in info["frames"]:
        scene = generate_scene(fr["scene_seed"], fr["preset"])
        pose = CameraPose(np.array(fr["pos"]), np.array(fr["rot"]).reshape(3, 3))
        li = fr["light"]
        lighting = LightingModel(
            intensity=li[0],
            color=(li[1], li[2], li[3]),
            ambient=li[4],
            specular_strength=li[5],
            specular_exponent=li[6],
        )
        frame = render_frame(
            scene, pose, lighting, cam, width=info["width"], height=info["height"]
        )
        rgb_path = os.path.join(out_dir, fr["rgb"])
        depth_path = os.path.join(out_dir, fr["depth"])
        write_rgb_ppm(frame.rgb, rgb_path)
        write_depth_pfm(frame.depth, depth_path)
        written.extend([rgb_path, depth_path])
        lines.append(
            _frame_line(
                fr["index"], fr["preset"], fr["scene_seed"], pose, lighting,
                fr["rgb"], fr["depth"],
            )
        )
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
    written.append(manifest)
    return written
