"""Surface coverage and point-cloud distances (CD, EMD, density-aware CD)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from viewplan.covering import pack_keys
from viewplan.geometry import PointCloud, quantize

DCD_TEMPERATURE = 1000.0
DCD_METADATA = {
    "temperature": DCD_TEMPERATURE,
    "distance": "euclidean, meters",
    "count_exponent": 1,
    "size_ratio_weight": False,
}


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def surface_coverage(
    observed: PointCloud,
    gt: PointCloud,
    grid_res: float,
    coverable: Optional[np.ndarray] = None,
) -> float:
    """Fraction of (coverable) ground-truth voxels that contain an observed point.

    ``coverable`` is a boolean mask over ``gt`` points; only voxels of
    coverable points enter numerator and denominator.
    """
    if len(gt) == 0:
        raise ValueError("ground-truth cloud is empty")
    gt_pts = gt.points if coverable is None else gt.points[np.asarray(coverable, dtype=bool)]
    target = np.unique(pack_keys(quantize(gt_pts, grid_res)))
    if len(target) == 0:
        raise ValueError("no coverable ground-truth points")
    if len(observed) == 0:
        return 0.0
    seen = np.unique(pack_keys(quantize(observed.points, grid_res)))
    return float(np.isin(target, seen, assume_unique=True).sum() / len(target))


def subsample(points: np.ndarray, n: int, seed: int) -> np.ndarray:
    """At most ``n`` points, chosen from a canonical ordering so input order does not matter."""
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    if len(pts) <= n:
        return pts
    rng = np.random.default_rng(seed)
    return pts[np.sort(rng.choice(len(pts), size=n, replace=False))]


def chamfer(a, b, sample_n: int = 10240, seed: int = 0) -> float:
    """Symmetric mean nearest-neighbour distance, averaged over both directions, in mm."""
    pa, pb = subsample(_points(a), sample_n, seed), subsample(_points(b), sample_n, seed)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float(0.5 * (d_ab.mean() + d_ba.mean()) * 1000.0)


def emd(a, b, sample_n: int = 512, seed: int = 0) -> float:
    """Mean matched distance of the optimal one-to-one assignment, in mm."""
    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("earth mover's distance needs two non-empty clouds")
    m = min(sample_n, len(pa), len(pb))
    pa, pb = subsample(pa, m, seed), subsample(pb, m, seed)
    if len(pa) != len(pb):
        raise RuntimeError("subsample sizes differ")
    dist = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(dist)
    return float(dist[rows, cols].mean() * 1000.0)


def dcd(a, b, temperature: float = DCD_TEMPERATURE, sample_n: int = 10240, seed: int = 0) -> float:
    """Density-aware Chamfer distance, in [0, 1].

    Each point contributes ``1 - exp(-temperature * d) / q`` where ``d`` is
    the distance to its nearest neighbour in the other cloud and ``q`` is how
    many points of its own cloud share that nearest neighbour. The two
    directional means are averaged.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    pa, pb = subsample(_points(a), sample_n, seed), subsample(_points(b), sample_n, seed)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("density-aware chamfer distance needs two non-empty clouds")

    def one_way(src, dst):
        d, nn = cKDTree(dst).query(src)
        q = np.bincount(nn, minlength=len(dst))[nn]
        return np.mean(1.0 - np.exp(-temperature * d) / q)

    return float(0.5 * (one_way(pa, pb) + one_way(pb, pa)))


TABLE_COLUMNS = ("surface_coverage", "required_views", "movement_cost", "cd", "emd", "dcd")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=lambda: {"dcd": dict(DCD_METADATA)})

    def add(self, **row) -> None:
        self.rows.append(row)

    def methods(self) -> list[str]:
        return sorted({r["method"] for r in self.rows})

    def summary(self) -> list[dict]:
        """Mean and population std of every table column, per method."""
        out = []
        for method in self.methods():
            rows = [r for r in self.rows if r["method"] == method]
            entry = {"method": method, "objects": len(rows)}
            for col in TABLE_COLUMNS:
                vals = np.array([r[col] for r in rows if r.get(col) is not None], dtype=float)
                if len(vals):
                    entry[f"{col}_mean"] = float(vals.mean())
                    entry[f"{col}_std"] = float(vals.std())
            out.append(entry)
        return out

    def write_csv(self, path) -> None:
        summary = self.summary()
        header = ["method", "objects"] + [f"{c}_{s}" for c in TABLE_COLUMNS for s in ("mean", "std")]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
            w.writeheader()
            for entry in summary:
                w.writerow({k: _fmt(entry.get(k)) for k in header})

    def write_json(self, path) -> None:
        doc = {"metadata": self.metadata, "summary": self.summary(), "rows": self.rows}
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v
