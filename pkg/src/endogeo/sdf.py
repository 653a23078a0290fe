"""Exact nearest-neighbour search over point clouds and signed-distance sampling.

The spatial index is a uniform grid hash.  Queries expand Chebyshev shells
of cells outward until no unexamined cell can hold a closer point, so
results are exact and identical to brute force, including the tie rule
(lowest point index wins at equal distance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AllPointsOutOfFrustum,
    CameraIntrinsics,
    DepthMap,
    EmptyCloud,
    OutOfFrustum,
    PointCloud,
    SdfGridSpec,
    _freeze,
)

__all__ = [
    "SpatialIndex",
    "brute_force_nearest",
    "nearest_neighbor",
    "k_nearest",
    "sample_grid",
    "SdfSample",
    "signed_distance",
    "sdf_field",
]


def _shell_offsets(r: int) -> np.ndarray:
    """All integer (dx, dy, dz) with Chebyshev norm exactly r."""
    if r == 0:
        return np.zeros((1, 3), dtype=np.int64)
    rng = np.arange(-r, r + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    cheb = np.abs(grid).max(axis=1)
    return grid[cheb == r]


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate [s, s + c) ranges without a Python loop."""
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    ends = np.cumsum(counts)
    out[0] = starts[0]
    out[ends[:-1]] = starts[1:] - (starts[:-1] + counts[:-1] - 1)
    return np.cumsum(out)


class SpatialIndex:
    """Uniform-grid hash over a point cloud.

    Cell edge defaults to bbox_diagonal / cbrt(N) (1.0 for degenerate
    clouds).  Points are bucketed by floor((p - origin) / cell); buckets are
    stored CSR-style over a sorted unique cell-id table.
    """

    def __init__(self, cloud: PointCloud, cell_size: float | None = None):
        if len(cloud) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        pts = cloud.points
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        diag = float(np.linalg.norm(hi - lo))
        if cell_size is None:
            cell_size = diag / max(len(cloud) ** (1.0 / 3.0), 1.0)
            if cell_size <= 0.0:
                cell_size = 1.0
        if not cell_size > 0.0:
            raise ValueError(f"cell size must be positive, got {cell_size}")

        self.cloud = cloud
        self.cell_size = float(cell_size)
        self.origin = lo
        dims = np.floor((hi - lo) / self.cell_size).astype(np.int64) + 1
        self.dims = np.maximum(dims, 1)

        coords = self._cell_coords(pts)
        flat = self._flatten(coords)
        order = np.argsort(flat, kind="stable")  # stable keeps index order in buckets
        sorted_flat = flat[order]
        uniq, starts = np.unique(sorted_flat, return_index=True)
        counts = np.diff(np.append(starts, sorted_flat.size))
        self._point_order = order
        self._cell_ids = uniq
        self._starts = starts
        self._counts = counts

    def _cell_coords(self, pts: np.ndarray) -> np.ndarray:
        c = np.floor((pts - self.origin) / self.cell_size).astype(np.int64)
        return np.clip(c, 0, self.dims - 1)

    def _flatten(self, coords: np.ndarray) -> np.ndarray:
        d = self.dims
        return (coords[:, 0] * d[1] + coords[:, 1]) * d[2] + coords[:, 2]

    # Below this many query-point pairs a chunked linear scan beats walking
    # shells; both paths share distance arithmetic, so answers are identical.
    BRUTE_PAIR_BUDGET = 2**24

    def _brute_batch(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = self.cloud.points
        m = q.shape[0]
        idx = np.empty(m, dtype=np.int64)
        d2 = np.empty(m)
        chunk = max(1, int(2**21 // max(pts.shape[0], 1)))
        for s in range(0, m, chunk):
            e = min(s + chunk, m)
            # one (chunk, n) plane per axis; same a^2 + b^2 + c^2 order as the
            # cell path, so distances and tie-breaks agree bitwise
            d = q[s:e, 0, None] - pts[None, :, 0]
            block = d * d
            d = q[s:e, 1, None] - pts[None, :, 1]
            block += d * d
            d = q[s:e, 2, None] - pts[None, :, 2]
            block += d * d
            idx[s:e] = np.argmin(block, axis=1)  # first minimum = lowest index
            d2[s:e] = block[np.arange(e - s), idx[s:e]]
        return idx, np.sqrt(d2)

    def query(
        self, queries: np.ndarray, method: str = "auto"
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest neighbour for each query row: (indices, distances).

        ``method`` picks the search strategy: "cells" walks the grid,
        "brute" scans linearly, "auto" chooses by workload.  All three give
        identical indices and distances (ties go to the lowest index).
        """
        if method not in ("auto", "cells", "brute"):
            raise ValueError(f"method must be auto, cells or brute, got {method!r}")
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        pts = self.cloud.points
        n_pts = pts.shape[0]
        m = q.shape[0]
        if method == "brute" or (
            method == "auto" and m * n_pts <= self.BRUTE_PAIR_BUDGET
        ):
            return self._brute_batch(q)
        best_d2 = np.full(m, np.inf)
        best_i = np.full(m, n_pts, dtype=np.int64)  # sentinel above any real index

        qc = np.floor((q - self.origin) / self.cell_size).astype(np.int64)
        # farthest occupied cell, in shells; beyond this nothing is left
        r_need = np.maximum(qc, (self.dims - 1) - qc).max(axis=1)
        # shells to walk before reaching the occupied box at all
        r_gap = np.maximum(np.maximum(-qc, qc - (self.dims - 1)), 0).max(axis=1)

        # Queries far outside the box would walk huge empty shells; a linear
        # scan is cheaper and equally exact there.
        far = np.flatnonzero(r_gap > int(self.dims.max()))
        if far.size:
            d2_far = np.sum((q[far][:, None, :] - pts[None, :, :]) ** 2, axis=2)
            best_i[far] = np.argmin(d2_far, axis=1)
            best_d2[far] = d2_far[np.arange(far.size), best_i[far]]

        active = np.setdiff1d(np.arange(m), far, assume_unique=True)
        r = 0
        while active.size:
            offs = _shell_offsets(r)
            cells = qc[active][:, None, :] + offs[None, :, :]
            inb = np.all((cells >= 0) & (cells < self.dims), axis=2)
            owner_rows, off_rows = np.nonzero(inb)
            if owner_rows.size:
                flat = self._flatten(cells[owner_rows, off_rows])
                pos = np.searchsorted(self._cell_ids, flat)
                pos = np.minimum(pos, self._cell_ids.size - 1)
                hit = self._cell_ids[pos] == flat
                owner_rows = owner_rows[hit]
                pos = pos[hit]
                if owner_rows.size:
                    rows = _expand_ranges(self._starts[pos], self._counts[pos])
                    cand = self._point_order[rows]
                    owners = np.repeat(active[owner_rows], self._counts[pos])
                    d2 = np.sum((q[owners] - pts[cand]) ** 2, axis=1)
                    # per-owner lexicographic minimum over (distance, index)
                    srt = np.lexsort((cand, d2, owners))
                    o_s, d_s, c_s = owners[srt], d2[srt], cand[srt]
                    first = np.ones(o_s.size, dtype=bool)
                    first[1:] = o_s[1:] != o_s[:-1]
                    o_f, d_f, c_f = o_s[first], d_s[first], c_s[first]
                    better = (d_f < best_d2[o_f]) | (
                        (d_f == best_d2[o_f]) & (c_f < best_i[o_f])
                    )
                    upd = o_f[better]
                    best_d2[upd] = d_f[better]
                    best_i[upd] = c_f[better]

            # a point in shell s >= r+1 sits at least (s-1)*cell away, and an
            # equal distance can still flip the tie to a lower index, so stay
            # active while r*cell <= best (non-strict)
            best_d = np.sqrt(best_d2[active])
            keep = ((best_i[active] == n_pts) | (r * self.cell_size <= best_d)) & (
                r + 1 <= r_need[active]
            )
            active = active[keep]
            r += 1
        return best_i, np.sqrt(best_d2)

    def query_one(self, point) -> tuple[int, float]:
        idx, dist = self.query(np.asarray(point, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(dist[0])


def brute_force_nearest(query, cloud: PointCloud) -> tuple[int, float]:
    """Reference linear scan; ties resolve to the lowest index via argmin."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot query an empty cloud")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d2 = np.sum((cloud.points - q) ** 2, axis=1)
    i = int(np.argmin(d2))
    return i, float(np.sqrt(d2[i]))


def nearest_neighbor(
    query, cloud: PointCloud, index: SpatialIndex | None = None
) -> tuple[int, float]:
    """Nearest cloud point to a query: (point index, Euclidean distance).

    With no index a brute-force scan runs; with one, the accelerated path.
    Both return identical results (ties break to the lowest index).
    """
    if index is None:
        return brute_force_nearest(query, cloud)
    return index.query_one(query)


def k_nearest(query, cloud: PointCloud, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagnostic k-NN by full sort: (indices, distances), nearest first.

    Ordered by (distance, index); k is clipped to the cloud size.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot query an empty cloud")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d2 = np.sum((cloud.points - q) ** 2, axis=1)
    order = np.lexsort((np.arange(d2.size), d2))[: min(k, d2.size)]
    return order, np.sqrt(d2[order])


def sample_grid(spec: SdfGridSpec) -> np.ndarray:
    """Lattice points of the spec, k-major order (z slowest, x fastest).

    Sample (i, j, k) sits at row k*ry*rx + j*rx + i and equals
    (1 - t) * lb + t * ub per axis with t = index / (resolution - 1), so the
    sample bounding box reproduces [x_lb, x_ub] exactly.
    """
    lb, ub = spec.x_lb, spec.x_ub

    def axis(res: int, a: int) -> np.ndarray:
        t = np.arange(res, dtype=np.float64) / (res - 1)
        return (1.0 - t) * lb[a] + t * ub[a]

    xs, ys, zs = axis(spec.rx, 0), axis(spec.ry, 1), axis(spec.rz, 2)
    pts = np.empty((spec.rz, spec.ry, spec.rx, 3))
    pts[..., 0] = xs[None, None, :]
    pts[..., 1] = ys[None, :, None]
    pts[..., 2] = zs[:, None, None]
    return pts.reshape(-1, 3)


@dataclass(frozen=True)
class SdfSample:
    """One signed-distance evaluation against a depth-induced surface."""

    position: np.ndarray
    distance: float  # unsigned magnitude
    sign: float  # +1.0 behind the surface (Z beyond the stored depth), else -1.0
    nearest_index: int

    @property
    def value(self) -> float:
        return self.sign * self.distance


def _project_to_pixels(
    points: np.ndarray, surface: DepthMap, cam: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Round points to their nearest pixel; mask covers Z > 0, in-bounds,
    valid-pixel.  Rounding is half-up (floor(x + 0.5))."""
    z = points[:, 2]
    ok = z > 0.0
    u = np.zeros(points.shape[0])
    v = np.zeros(points.shape[0])
    np.divide(points[:, 0], z, out=u, where=ok)
    np.divide(points[:, 1], z, out=v, where=ok)
    u = cam.fx * u + cam.cx
    v = cam.fy * v + cam.cy
    px = np.floor(u + 0.5).astype(np.int64)
    py = np.floor(v + 0.5).astype(np.int64)
    ok &= (px >= 0) & (px < surface.width) & (py >= 0) & (py < surface.height)
    px_c = np.clip(px, 0, surface.width - 1)
    py_c = np.clip(py, 0, surface.height - 1)
    ok &= surface.mask[py_c, px_c]
    return px_c, py_c, ok


def signed_distance(
    query,
    surface_depth: DepthMap,
    cam: CameraIntrinsics,
    index: SpatialIndex | None = None,
) -> SdfSample:
    """Signed distance from a camera-frame point to the depth-induced surface.

    Magnitude is the exact nearest-neighbour distance to the back-projected
    cloud; the sign is +1 when the query's Z exceeds the stored depth at its
    (half-up rounded) projected pixel, -1 otherwise.  Queries that do not
    project onto a valid pixel raise OutOfFrustum.
    """
    q = np.asarray(query, dtype=np.float64).reshape(1, 3)
    px, py, ok = _project_to_pixels(q, surface_depth, cam)
    if not ok[0]:
        raise OutOfFrustum(f"query {q[0]} does not project onto a valid pixel")
    if index is None:
        from .geometry import depth_to_cloud

        index = SpatialIndex(depth_to_cloud(surface_depth, cam))
    ni, dist = index.query_one(q[0])
    sign = 1.0 if q[0, 2] > surface_depth.data[py[0], px[0]] else -1.0
    return SdfSample(position=q[0], distance=dist, sign=sign, nearest_index=ni)


def sdf_field(
    grid_points: np.ndarray,
    surface_depth: DepthMap,
    cam: CameraIntrinsics,
    index: SpatialIndex | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Signed distances for a batch of sample points: (values, included).

    Samples that fail to project onto a valid pixel are excluded (False in
    the mask, NaN in values) rather than raising, so callers can report
    exclusions.  Raises AllPointsOutOfFrustum when nothing is included.
    """
    pts = np.asarray(grid_points, dtype=np.float64).reshape(-1, 3)
    px, py, ok = _project_to_pixels(pts, surface_depth, cam)
    if not ok.any():
        raise AllPointsOutOfFrustum("no sample projects onto a valid pixel")
    if index is None:
        from .geometry import depth_to_cloud

        index = SpatialIndex(depth_to_cloud(surface_depth, cam))
    values = np.full(pts.shape[0], np.nan)
    _, dist = index.query(pts[ok])
    sign = np.where(pts[ok, 2] > surface_depth.data[py[ok], px[ok]], 1.0, -1.0)
    values[ok] = sign * dist
    return values, ok
