"""Ideal depth sensing: which surface samples a camera at a view sees."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from viewplan.geometry import PointCloud, quantize, unique_keys
from viewplan.occupancy import OccupancyGrid, visible_points
from viewplan.viewspace import View


@dataclass(frozen=True)
class SensorConfig:
    point_spacing: float = 0.002
    max_range: float = 1.0
    self_radius: Optional[int] = None

    def __post_init__(self):
        if not self.point_spacing > 0:
            raise ValueError("point_spacing must be positive")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


def capture_mask(mesh_points: PointCloud, grid: OccupancyGrid, view: View, cfg: SensorConfig) -> np.ndarray:
    mask = visible_points(grid, view.position, mesh_points, cfg.self_radius)
    if len(mesh_points):
        mask &= np.linalg.norm(mesh_points.points - view.position, axis=1) <= cfg.max_range
    return mask


def capture(mesh_points: PointCloud, grid: OccupancyGrid, view: View, cfg: SensorConfig) -> PointCloud:
    """The subset of ``mesh_points`` visible from ``view``, tagged with the view id."""
    mask = capture_mask(mesh_points, grid, view, cfg)
    return mesh_points.subset(np.flatnonzero(mask)).with_source(view.id)


def accumulate(captures: Sequence[PointCloud], resolution: float) -> PointCloud:
    """Union of captures, keeping the first point (and its source tag) in each voxel."""
    captures = [c for c in captures if len(c)]
    if not captures:
        return PointCloud.empty()
    pts = np.vstack([c.points for c in captures])
    has_src = all(c.source is not None for c in captures)
    has_nrm = all(c.normals is not None for c in captures)
    _, first = unique_keys(quantize(pts, resolution))
    keep = np.sort(first)
    src = np.concatenate([c.source for c in captures])[keep] if has_src else None
    nrm = np.vstack([c.normals for c in captures])[keep] if has_nrm else None
    return PointCloud(pts[keep], src, nrm)
