"""Global tour over a chosen view set: shortest Hamiltonian path from a fixed start."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

MAX_DP_VIEWS = 24
TIE_TOL = 1e-12


class TourSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Tour:
    order: tuple
    total_cost: float
    per_leg_costs: tuple

    @classmethod
    def from_order(cls, order, cost: np.ndarray) -> "Tour":
        order = tuple(int(v) for v in order)
        legs = tuple(float(cost[a, b]) for a, b in zip(order[:-1], order[1:]))
        return cls(order, float(sum(legs)), legs)

    def to_dict(self) -> dict:
        return {"order": list(self.order), "total_cost": self.total_cost, "per_leg_costs": list(self.per_leg_costs)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def prefix_within(self, budget: float) -> "Tour":
        """Longest prefix whose cumulative cost stays within ``budget``."""
        spent = 0.0
        k = 1
        for leg in self.per_leg_costs:
            if spent + leg > budget:
                break
            spent += leg
            k += 1
        return Tour(self.order[:k], float(sum(self.per_leg_costs[: k - 1])), self.per_leg_costs[: k - 1])


def _targets(n: int, chosen, start: int) -> list[int]:
    if not 0 <= start < n:
        raise ValueError(f"start view {start} out of range [0, {n})")
    arr = np.asarray(chosen)
    if arr.dtype == bool:
        if len(arr) != n:
            raise ValueError(f"view mask has length {len(arr)}, expected {n}")
        ids = np.flatnonzero(arr)
    else:
        ids = np.unique(arr.astype(np.int64))
        if len(ids) and (ids[0] < 0 or ids[-1] >= n):
            raise ValueError("chosen view id out of range")
    return [int(v) for v in ids if v != start]


def _cost_of(space_or_cost) -> np.ndarray:
    cost = getattr(space_or_cost, "cost", space_or_cost)
    return np.asarray(cost, dtype=np.float64)


@numba.njit(cache=True)
def _suffix_table(c):
    """h[mask, j]: cheapest way to visit every node outside ``mask`` starting at j (j in mask)."""
    k = c.shape[0]
    full = (1 << k) - 1
    h = np.full((1 << k, k), np.inf)
    for j in range(k):
        h[full, j] = 0.0
    for mask in range(full - 1, 0, -1):
        for j in range(k):
            if not (mask >> j) & 1:
                continue
            best = np.inf
            for u in range(k):
                if (mask >> u) & 1:
                    continue
                val = c[j, u] + h[mask | (1 << u), u]
                if val < best:
                    best = val
            h[mask, j] = best
    return h


def plan_tour(space, chosen, start: int) -> Tour:
    """Minimum-cost open path from ``start`` through every chosen view (Held-Karp).

    ``space`` is a ViewSpace or a square cost matrix; ``chosen`` a boolean
    mask or a list of view ids. Ties resolve to the lexicographically
    smallest visiting order.
    """
    cost = _cost_of(space)
    n = len(cost)
    targets = _targets(n, chosen, start)
    if not targets:
        return Tour((start,), 0.0, ())
    if len(targets) + 1 > MAX_DP_VIEWS:
        raise TourSizeError(
            f"{len(targets) + 1} views exceed the exact planner limit of {MAX_DP_VIEWS}; use plan_tour_greedy"
        )
    k = len(targets)
    sub = np.ascontiguousarray(cost[np.ix_(targets, targets)])
    first = cost[start, targets]
    h = _suffix_table(sub)
    order = [start]
    mask = 0
    prev = None
    for _ in range(k):
        if prev is None:
            vals = first + np.array([h[1 << u, u] for u in range(k)])
            cand = range(k)
        else:
            cand = [u for u in range(k) if not (mask >> u) & 1]
            vals = np.full(k, np.inf)
            for u in cand:
                vals[u] = sub[prev, u] + h[mask | (1 << u), u]
        best = vals.min()
        # nodes are sorted by view id, so the first near-minimal node is the smallest id
        u = next(u for u in cand if vals[u] <= best + TIE_TOL * max(1.0, abs(best)))
        order.append(targets[u])
        mask |= 1 << u
        prev = u
    return Tour.from_order(order, cost)


def plan_tour_greedy(space, chosen, start: int) -> Tour:
    """Nearest-neighbour order from ``start``; ties go to the lowest view id."""
    cost = _cost_of(space)
    remaining = _targets(len(cost), chosen, start)
    order = [start]
    while remaining:
        cur = order[-1]
        nxt = min(remaining, key=lambda v: (cost[cur, v], v))
        order.append(nxt)
        remaining.remove(nxt)
    return Tour.from_order(order, cost)
