"""Stand-ins for implicit-surface refinement of sparse observations.

A real refiner densifies a partial scan by querying a learned occupancy
field. Here the ``oracle_dilation`` refiner grows an observation by every
ground-truth sample within a radius of it, which reproduces the property
the planner relies on (refined clouds hold more surface than was seen)
without a neural network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from viewplan.geometry import PointCloud

KINDS = ("identity", "oracle_dilation")


@dataclass(frozen=True)
class Refiner:
    kind: str = "oracle_dilation"
    dilation_radius: float = 0.01
    noise_regions: int = 0
    noise_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown refiner kind {self.kind!r}; expected one of {KINDS}")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be non-negative")
        if self.noise_regions < 0:
            raise ValueError("noise_regions must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "Refiner":
        return cls(**{k: d[k] for k in ("kind", "dilation_radius", "noise_regions", "noise_seed") if k in d})


def _dilate(observed: PointCloud, gt: PointCloud, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Indices of gt points within ``radius`` of ``observed`` and the nearest observed index of each."""
    tree = cKDTree(observed.points)
    dist, nearest = tree.query(gt.points, k=1)
    keep = np.flatnonzero(dist <= radius)
    return keep, nearest[keep]


def refine(r: Refiner, observed: PointCloud, gt_points: Optional[PointCloud] = None, seed: Optional[int] = None) -> PointCloud:
    """Densify an observation.

    ``identity`` returns ``observed`` unchanged. ``oracle_dilation`` returns
    the ground-truth samples within ``r.dilation_radius`` of any observed
    point, in ground-truth order, tagged with the source view of their
    nearest observed point. With ``noise_regions > 0`` it also adds up to
    that many dilated patches around random unobserved ground-truth points.
    """
    if r.kind == "identity":
        return observed
    if gt_points is None or len(gt_points) == 0:
        raise ValueError("the oracle_dilation refiner needs a non-empty ground-truth cloud")
    if len(observed) == 0:
        return PointCloud.empty()
    keep, nearest = _dilate(observed, gt_points, r.dilation_radius)
    source = None if observed.source is None else observed.source[nearest]
    if r.noise_regions:
        rng = np.random.default_rng(r.noise_seed if seed is None else seed)
        unseen = np.setdiff1d(np.arange(len(gt_points)), keep)
        if len(unseen):
            seeds = rng.choice(unseen, size=min(r.noise_regions, len(unseen)), replace=False)
            extra, _ = _dilate(gt_points.subset(seeds), gt_points, r.dilation_radius)
            merged = np.union1d(keep, extra)
            if source is not None:
                lookup = dict(zip(keep.tolist(), source.tolist()))
                fill = int(observed.source[0])
                source = np.array([lookup.get(i, fill) for i in merged.tolist()], dtype=np.int64)
            keep = merged
    out = gt_points.subset(keep)
    return PointCloud(out.points, source, out.normals)
