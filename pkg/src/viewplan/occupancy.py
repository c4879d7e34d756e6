"""Flat voxel occupancy grid with Amanatides-Woo ray traversal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from viewplan.geometry import PointCloud, quantize


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Dense boolean grid aligned to the global ``quantize`` lattice.

    Voxel ``(i, j, k)`` of the grid is lattice key ``offset + (i, j, k)``,
    so grid-local indices and package-wide voxel keys convert exactly.
    """

    resolution: float
    offset: np.ndarray
    occupied: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        off = np.asarray(self.offset, dtype=np.int64).reshape(3)
        occ = np.ascontiguousarray(self.occupied, dtype=np.bool_)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise ValueError(f"occupancy must be a non-empty 3D array, got shape {occ.shape}")
        occ.setflags(write=False)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "occupied", occ)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.occupied.shape)

    @property
    def origin(self) -> np.ndarray:
        return self.offset * self.resolution

    @property
    def upper(self) -> np.ndarray:
        return (self.offset + np.array(self.dims)) * self.resolution

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    def local_index(self, points) -> np.ndarray:
        return quantize(points, self.resolution) - self.offset

    def occupied_keys(self) -> np.ndarray:
        """Global lattice keys of occupied voxels, row-major order."""
        return np.argwhere(self.occupied).astype(np.int64) + self.offset

    def is_occupied(self, points) -> np.ndarray:
        idx = self.local_index(points)
        inside = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)
        out = np.zeros(len(idx), dtype=bool)
        i = idx[inside]
        out[inside] = self.occupied[i[:, 0], i[:, 1], i[:, 2]]
        return out

    def with_occupied(self, occupied: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.offset, occupied)

    def voxel_centers(self) -> np.ndarray:
        return (self.occupied_keys() + 0.5) * self.resolution


def build_grid(cloud: PointCloud, resolution: float, padding: float = 0.0) -> OccupancyGrid:
    """Voxelize ``cloud``; the grid spans its bbox grown by ``padding``, snapped outward to the lattice."""
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    if len(cloud) == 0:
        raise ValueError("cannot build a grid from an empty cloud")
    if padding < 0:
        raise ValueError("padding must be non-negative")
    lo = cloud.points.min(axis=0) - padding
    hi = cloud.points.max(axis=0) + padding
    klo = quantize(lo, resolution)[0]
    khi = quantize(hi, resolution)[0]
    dims = khi - klo + 1
    occ = np.zeros(tuple(dims), dtype=bool)
    idx = quantize(cloud.points, resolution) - klo
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return OccupancyGrid(resolution, klo, occ)


@numba.njit(cache=True, nogil=True)
def _traverse(occ, res, offset, start, end, target, self_radius, normal, slab):
    """First occupied grid-local voxel on start->end, or (-1,-1,-1).

    Traversal stops without a hit on entering any voxel within Chebyshev
    distance ``self_radius`` of ``target`` (a grid-local index). With a
    non-zero ``normal``, occupied voxels whose centers lie within ``slab``
    of the tangent plane through ``end`` are not treated as occluders.
    """
    use_plane = normal[0] != 0.0 or normal[1] != 0.0 or normal[2] != 0.0
    nx, ny, nz = occ.shape
    dims = (nx, ny, nz)
    d = np.empty(3)
    for a in range(3):
        d[a] = end[a] - start[a]
    # clip the segment against the grid box (slab method)
    t0 = 0.0
    t1 = 1.0
    for a in range(3):
        lo = offset[a] * res
        hi = (offset[a] + dims[a]) * res
        if d[a] == 0.0:
            if start[a] < lo or start[a] >= hi:
                return -1, -1, -1
        else:
            ta = (lo - start[a]) / d[a]
            tb = (hi - start[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return -1, -1, -1

    cur = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    tmax = np.empty(3)
    tdelta = np.empty(3)
    for a in range(3):
        p = start[a] + t0 * d[a]
        c = np.int64(np.floor(p / res)) - offset[a]
        if t0 > 0.0:
            # entry point sits on the box face; keep it inside the grid
            if c < 0:
                c = 0
            elif c >= dims[a]:
                c = dims[a] - 1
        cur[a] = c
        if d[a] > 0:
            step[a] = 1
            tmax[a] = (((c + offset[a] + 1) * res) - start[a]) / d[a]
            tdelta[a] = res / d[a]
        elif d[a] < 0:
            step[a] = -1
            tmax[a] = (((c + offset[a]) * res) - start[a]) / d[a]
            tdelta[a] = -res / d[a]
        else:
            step[a] = 0
            tmax[a] = np.inf
            tdelta[a] = np.inf
    endv = target
    while True:
        inside = 0 <= cur[0] < nx and 0 <= cur[1] < ny and 0 <= cur[2] < nz
        if not inside:
            return -1, -1, -1
        near = (
            abs(cur[0] - endv[0]) <= self_radius
            and abs(cur[1] - endv[1]) <= self_radius
            and abs(cur[2] - endv[2]) <= self_radius
        )
        if near:
            return -1, -1, -1
        if occ[cur[0], cur[1], cur[2]]:
            if not use_plane:
                return cur[0], cur[1], cur[2]
            h = 0.0
            for b in range(3):
                h += ((cur[b] + offset[b] + 0.5) * res - end[b]) * normal[b]
            if abs(h) > slab:
                return cur[0], cur[1], cur[2]
        # ties step x, then y, then z
        if tmax[0] <= tmax[1] and tmax[0] <= tmax[2]:
            a = 0
        elif tmax[1] <= tmax[2]:
            a = 1
        else:
            a = 2
        if tmax[a] > t1:
            return -1, -1, -1
        cur[a] += step[a]
        tmax[a] += tdelta[a]


@numba.njit(cache=True, nogil=True)
def _visible_batch(occ, res, offset, camera, points, targets, self_radius, normals, slab):
    out = np.zeros(len(points), dtype=np.bool_)
    for i in range(len(points)):
        hx, hy, hz = _traverse(occ, res, offset, camera, points[i], targets[i], self_radius, normals[i], slab)
        out[i] = hx < 0
    return out


_NO_NORMAL = np.zeros(3)


def cast_ray(grid: OccupancyGrid, start, end) -> Optional[tuple[int, int, int]]:
    """First occupied voxel along ``start -> end``, excluding the voxel containing ``end``.

    Returns the global lattice key of the hit, or ``None``.
    """
    start = np.asarray(start, dtype=np.float64).reshape(3)
    end = np.asarray(end, dtype=np.float64).reshape(3)
    if np.array_equal(start, end):
        raise ValueError("ray start and end coincide")
    target = quantize(end, grid.resolution)[0] - grid.offset
    hit = _traverse(grid.occupied, grid.resolution, grid.offset, start, end, target, 0, _NO_NORMAL, 0.0)
    if hit[0] < 0:
        return None
    return tuple(int(h + o) for h, o in zip(hit, grid.offset))


def visible_points(
    grid: OccupancyGrid,
    camera,
    candidates: PointCloud,
    self_radius: Optional[int] = None,
    cull_backfaces: bool = True,
) -> np.ndarray:
    """Boolean mask over ``candidates``: True where the line of sight from ``camera`` is free.

    The candidate's own voxel never occludes it. When the cloud carries
    normals, occupied voxels whose centers lie within half a voxel diagonal
    of the candidate's tangent plane are skipped too (the surface sheet the
    candidate sits on), and with ``cull_backfaces`` points whose outward
    normal faces away from the camera are invisible. Without normals, voxels
    within Chebyshev distance ``self_radius`` of the candidate's voxel are
    skipped instead (default 1).
    """
    if len(candidates) == 0:
        return np.zeros(0, dtype=bool)
    camera = np.asarray(camera, dtype=np.float64).reshape(3)
    if grid.is_occupied(camera[None])[0]:
        raise ValueError("camera lies inside an occupied voxel")
    pts = np.ascontiguousarray(candidates.points)
    targets = np.ascontiguousarray(quantize(pts, grid.resolution) - grid.offset)
    if candidates.normals is not None:
        normals = np.ascontiguousarray(candidates.normals)
        slab = 0.5 * np.sqrt(3.0) * grid.resolution * (1 + 1e-9)
        radius = 0 if self_radius is None else int(self_radius)
    else:
        normals = np.zeros_like(pts)
        slab = 0.0
        radius = 1 if self_radius is None else int(self_radius)
    vis = _visible_batch(grid.occupied, grid.resolution, grid.offset, camera, pts, targets, radius, normals, slab)
    if candidates.normals is not None and cull_backfaces:
        vis &= np.einsum("ij,ij->i", normals, camera - pts) > 0
    return vis
