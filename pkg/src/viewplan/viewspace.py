"""Hemispherical candidate view space and view-to-view movement costs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from viewplan.geometry import Pose


@dataclass(frozen=True, eq=False)
class View:
    id: int
    pose: Pose

    @property
    def position(self) -> np.ndarray:
        return self.pose.position


@dataclass(frozen=True, eq=False)
class ViewSpace:
    positions: np.ndarray
    radius: float
    center: np.ndarray
    cost: np.ndarray
    seed: int = 0
    iterations: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        cost = np.asarray(self.cost, dtype=np.float64).reshape(len(pos), len(pos))
        for a in (pos, cost):
            a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def views(self) -> list[View]:
        return [View(i, Pose.look_at(p, self.center)) for i, p in enumerate(self.positions)]

    def view(self, i: int) -> View:
        return View(i, Pose.look_at(self.positions[i], self.center))

    def directions(self) -> np.ndarray:
        return (self.positions - self.center) / self.radius

    def min_angular_separation(self) -> float:
        return _min_angle(self.directions())

    def recentered(self, center) -> "ViewSpace":
        """Same unit directions around a new object center (costs are translation-invariant)."""
        center = np.asarray(center, dtype=np.float64)
        return ViewSpace(self.directions() * self.radius + center, self.radius, center, self.cost, self.seed, self.iterations)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "radius": self.radius,
            "center": self.center.tolist(),
            "seed": self.seed,
            "iterations": self.iterations,
            "positions": self.positions.tolist(),
            "cost": self.cost.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSpace":
        space = cls(d["positions"], float(d["radius"]), d["center"], d["cost"], int(d.get("seed", 0)), int(d.get("iterations", 0)))
        if space.n != int(d["n"]):
            raise ValueError(f"view space declares n={d['n']} but lists {space.n} positions")
        return space

    @classmethod
    def load(cls, path) -> "ViewSpace":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _angles(units: np.ndarray) -> np.ndarray:
    """Pairwise angles between unit vectors, via atan2 for accuracy at 0 and pi."""
    cross = np.linalg.norm(np.cross(units[:, None, :], units[None, :, :]), axis=-1)
    dot = units @ units.T
    return np.arctan2(cross, dot)


def _min_angle(units: np.ndarray) -> float:
    ang = _angles(units)
    np.fill_diagonal(ang, np.inf)
    return float(ang.min())


def _project(units: np.ndarray) -> np.ndarray:
    """Back onto the unit upper hemisphere (z >= 0)."""
    out = units.copy()
    out[:, 2] = np.maximum(out[:, 2], 0.0)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    # a point pushed straight to the south pole has no horizontal component
    bad = norm[:, 0] < 1e-12
    out[bad] = [1.0, 0.0, 0.0]
    norm[bad] = 1.0
    return out / norm


def _tangent_basis(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def _rotate_toward(u: np.ndarray, direction: np.ndarray, angle: float) -> np.ndarray:
    return np.cos(angle) * u + np.sin(angle) * direction


def _polish(units: np.ndarray, steps: Sequence[float], n_dirs: int, max_rounds: int = 5000) -> np.ndarray:
    """Single-point hill climbing on the minimum pairwise angle.

    Candidate moves: ``n_dirs`` evenly spaced tangent directions plus the
    direction straight away from the nearest neighbour.
    """
    units = units.copy()
    dirs = 2 * np.pi * np.arange(n_dirs) / n_dirs
    for step in steps:
        for _ in range(max_rounds):
            improved = False
            ang = _angles(units)
            np.fill_diagonal(ang, np.inf)
            # only endpoints of a minimum pair can raise the minimum
            movable = np.flatnonzero(ang.min(axis=1) <= ang.min() + 1e-15)
            for i in movable:
                ang = _angles(units)
                np.fill_diagonal(ang, np.inf)
                best = ang.min()
                others = np.delete(units, i, axis=0)
                rest = np.delete(np.delete(ang, i, axis=0), i, axis=1).min() if len(units) > 2 else np.inf
                e1, e2 = _tangent_basis(units[i])
                tangents = [np.cos(t) * e1 + np.sin(t) * e2 for t in dirs]
                away = units[i] - units[int(np.argmin(ang[i]))]
                away -= np.dot(away, units[i]) * units[i]
                if np.linalg.norm(away) > 1e-12:
                    tangents.append(away / np.linalg.norm(away))
                cands = np.array([_rotate_toward(units[i], d, step) for d in tangents])
                cands = _project(cands)
                own = np.arctan2(
                    np.linalg.norm(np.cross(cands[:, None, :], others[None, :, :]), axis=-1),
                    cands @ others.T,
                ).min(axis=1)
                score = np.minimum(own, rest)
                k = int(np.argmax(score))
                if score[k] > best + 1e-13:
                    units[i] = cands[k]
                    improved = True
            if not improved:
                break
    return units


def build_viewspace(
    n: int,
    radius: float,
    center=(0.0, 0.0, 0.0),
    seed: int = 0,
    iterations: int = 1500,
) -> ViewSpace:
    """Spread ``n`` views over the upper hemisphere, maximizing their minimum separation.

    Pairwise repulsion with a sharpening exponent does the global work;
    single-point hill climbing at shrinking step sizes (down to 1e-3 rad)
    then drives the layout to a local max-min optimum.
    """
    if n < 2:
        raise ValueError(f"a view space needs at least 2 views, got n={n}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    units = rng.normal(size=(n, 3))
    units[:, 2] = np.abs(units[:, 2])
    units = _project(units)
    for it in range(iterations):
        frac = it / max(iterations - 1, 1)
        power = 2.0 + 10.0 * frac
        step = 0.05 * (1 - frac) + 0.002
        diff = units[:, None, :] - units[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        dmin = dist.min()
        force = (diff * ((dmin / dist) ** (power + 1) / dist)[..., None]).sum(axis=1)
        force -= np.einsum("ij,ij->i", force, units)[:, None] * units
        scale = np.linalg.norm(force, axis=1).max()
        if scale > 0:
            units = _project(units + step * force / scale)
    units = _polish(units, steps=(1e-2, 3e-3), n_dirs=72)
    units = _polish(units, steps=(1e-3,), n_dirs=720)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    positions = center + radius * units
    return ViewSpace(positions, float(radius), center, cost_matrix(units, radius), seed, iterations)


def cost_matrix(units: np.ndarray, radius: float) -> np.ndarray:
    cost = radius * _angles(units)
    np.fill_diagonal(cost, 0.0)
    return np.maximum(cost, cost.T)


def movement_cost(a, b, radius: float, center=(0.0, 0.0, 0.0)) -> float:
    """Great-circle arc length between two views on the sphere of ``radius`` about ``center``."""
    pa = a.position if isinstance(a, View) else np.asarray(a, dtype=np.float64)
    pb = b.position if isinstance(b, View) else np.asarray(b, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    u, v = pa - c, pb - c
    return float(radius * np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v)))
