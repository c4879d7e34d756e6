"""Set-covering view selection over voxelized surface observations.

The universe is the set of ground-truth voxels observed (after refinement)
by at least ``alpha`` views; each view covers the voxels of its own refined
cloud. Solvers pick a minimum number of views covering whatever part of the
universe the already-used views have not covered.

Internally every universe element is reduced to the bitmask of views that
cover it. Elements with identical masks collapse into one row, and a row
that is a superset of another is implied by it, so the exact search only
ever sees a few hundred rows even for thousands of voxels.
"""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from viewplan.geometry import PointCloud, quantize

log = logging.getLogger(__name__)

MAX_VIEWS = 64
_MAGIC = b"SCOV"
_VERSION = 1


class InfeasibleCoverError(ValueError):
    """Some residual universe elements are covered by no allowed view."""

    def __init__(self, keys: np.ndarray):
        self.keys = np.asarray(keys)
        super().__init__(f"{len(self.keys)} universe element(s) cannot be covered by any allowed view")


def pack_keys(keys: np.ndarray) -> np.ndarray:
    """Encode integer voxel keys (|k| < 2**20 per axis) as single int64 values."""
    keys = np.asarray(keys, dtype=np.int64).reshape(len(keys), -1)
    if keys.shape[1] == 1:
        return keys[:, 0].copy()
    if np.any(np.abs(keys) >= 1 << 20):
        raise ValueError("voxel key out of packable range")
    k = keys + (1 << 20)
    return (k[:, 0] << 42) | (k[:, 1] << 21) | k[:, 2]


@dataclass(frozen=True, eq=False)
class CoverInstance:
    """``keys[i]`` is element ``i``; ``subsets[v]`` and ``universe`` index into ``keys``."""

    keys: np.ndarray
    subsets: tuple
    universe: np.ndarray
    alpha: int = 1
    grid_res: float = 0.0

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64)
        if keys.ndim == 1:
            keys = keys[:, None]
        subsets = tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in self.subsets)
        universe = np.unique(np.asarray(self.universe, dtype=np.int64))
        if not subsets:
            raise ValueError("an instance needs at least one view")
        if len(subsets) > MAX_VIEWS:
            raise ValueError(f"at most {MAX_VIEWS} views are supported, got {len(subsets)}")
        for arr in subsets + (universe,):
            if len(arr) and (arr[0] < 0 or arr[-1] >= len(keys)):
                raise ValueError("element index out of range")
            arr.setflags(write=False)
        keys.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "subsets", subsets)
        object.__setattr__(self, "universe", universe)

    @classmethod
    def from_sets(cls, subsets: Sequence, universe=None, alpha: int = 1) -> "CoverInstance":
        """Instance over arbitrary hashable elements; ``universe`` defaults to the union."""
        labels = sorted({e for s in subsets for e in s} | set(universe or ()), key=repr)
        index = {e: i for i, e in enumerate(labels)}
        keys = np.arange(len(labels))
        subs = [[index[e] for e in s] for s in subsets]
        uni = list(range(len(labels))) if universe is None else [index[e] for e in universe]
        return cls(keys, tuple(subs), np.array(uni, dtype=np.int64), alpha)

    @property
    def n(self) -> int:
        return len(self.subsets)

    @property
    def is_empty(self) -> bool:
        return len(self.universe) == 0

    def universe_keys(self) -> np.ndarray:
        return self.keys[self.universe]

    def subset_keys(self, v: int) -> np.ndarray:
        return self.keys[self.subsets[v]]

    def coverers(self) -> np.ndarray:
        """uint64 bitmask of covering views for every universe element (universe order)."""
        member = np.zeros(len(self.keys), dtype=np.uint64)
        for v, s in enumerate(self.subsets):
            member[s] |= np.uint64(1) << np.uint64(v)
        return member[self.universe]

    def is_covered_by(self, mask, used=None) -> bool:
        sel = _as_bits(mask, self.n) | (0 if used is None else _as_bits(used, self.n))
        return bool(np.all(self.coverers() & np.uint64(sel)))

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """JSON header followed by little-endian int32/int64 payload."""
        header = {
            "version": _VERSION,
            "n": self.n,
            "alpha": int(self.alpha),
            "grid_res": float(self.grid_res),
            "n_keys": int(len(self.keys)),
            "key_dim": int(self.keys.shape[1]),
            "universe_size": int(len(self.universe)),
            "subset_sizes": [int(len(s)) for s in self.subsets],
        }
        hbytes = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(hbytes)))
            fh.write(hbytes)
            fh.write(self.keys.astype("<i8").tobytes())
            fh.write(self.universe.astype("<i4").tobytes())
            for s in self.subsets:
                fh.write(s.astype("<i4").tobytes())

    @classmethod
    def load(cls, path) -> "CoverInstance":
        data = Path(path).read_bytes()
        if data[:4] != _MAGIC:
            raise ValueError(f"{path}: not a cover-instance file")
        (hlen,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8 : 8 + hlen])
        if header["version"] != _VERSION:
            raise ValueError(f"{path}: unsupported version {header['version']}")
        pos = 8 + hlen

        def take(count, dtype):
            nonlocal pos
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr.astype(np.int64)

        keys = take(header["n_keys"] * header["key_dim"], "<i8").reshape(-1, header["key_dim"])
        universe = take(header["universe_size"], "<i4")
        subsets = tuple(take(k, "<i4") for k in header["subset_sizes"])
        return cls(keys, subsets, universe, header["alpha"], header["grid_res"])


@dataclass(frozen=True)
class CoverSolution:
    mask: np.ndarray
    optimal: bool
    residual_size: int = 0
    nodes: int = 0
    elapsed: float = field(default=0.0, compare=False)

    @property
    def views(self) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.mask)]

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def build_instance(refined: Sequence[PointCloud], gt: PointCloud, grid_res: float, alpha: int) -> CoverInstance:
    """Voxelize per-view clouds and keep gt voxels seen by at least ``alpha`` views."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if len(refined) < 1:
        raise ValueError("need at least one view")
    per_view = [np.unique(pack_keys(quantize(c.points, grid_res))) for c in refined]
    packed = np.concatenate(per_view) if per_view else np.zeros(0, dtype=np.int64)
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    bounds = np.cumsum([0] + [len(p) for p in per_view])
    subsets = tuple(inverse[bounds[v] : bounds[v + 1]] for v in range(len(per_view)))
    gt_packed = np.unique(pack_keys(quantize(gt.points, grid_res)))
    in_gt = np.isin(uniq, gt_packed, assume_unique=True)
    universe = np.flatnonzero(in_gt & (counts >= alpha))
    keys = _unpack(uniq)
    inst = CoverInstance(keys, subsets, universe, alpha, grid_res)
    if inst.is_empty:
        log.warning("empty universe at alpha=%d: no voxel is seen by enough views", alpha)
    return inst


def _unpack(packed: np.ndarray) -> np.ndarray:
    m = (1 << 21) - 1
    return np.column_stack([(packed >> 42) & m, (packed >> 21) & m, packed & m]) - (1 << 20)


def _as_bits(mask, n: int) -> int:
    if mask is None:
        return 0
    if isinstance(mask, (int, np.integer)):
        return int(mask)
    arr = np.asarray(mask, dtype=bool).reshape(-1)
    if len(arr) != n:
        raise ValueError(f"view mask has length {len(arr)}, expected {n}")
    return sum(1 << int(v) for v in np.flatnonzero(arr))


def _to_mask(bits: int, n: int) -> np.ndarray:
    return np.array([(bits >> v) & 1 for v in range(n)], dtype=bool)


def _residual_rows(inst: CoverInstance, used) -> tuple[np.ndarray, np.ndarray, int]:
    """Distinct coverer masks of elements not yet covered by ``used``, with multiplicities."""
    used_bits = _as_bits(used, inst.n)
    cov = inst.coverers()
    residual = (cov & np.uint64(used_bits)) == 0
    cov = cov[residual]
    bad = cov == 0
    if np.any(bad):
        raise InfeasibleCoverError(inst.universe_keys()[residual][bad])
    rows, counts = np.unique(cov, return_counts=True)
    return rows, counts, used_bits


def _minimal_rows(rows: np.ndarray) -> list[int]:
    """Drop rows that contain another row; what covers the subset covers the superset too."""
    order = sorted((int(r) for r in rows), key=lambda r: (bin(r).count("1"), r))
    kept: list[int] = []
    for r in order:
        if not any(k & ~r == 0 for k in kept):
            kept.append(r)
    return kept


def _greedy_bits(rows: np.ndarray, counts: np.ndarray, n: int, allowed: int) -> int:
    rows = rows.copy()
    counts = counts.copy()
    chosen = 0
    while len(rows):
        gains = np.array([counts[(rows >> np.uint64(v)) & np.uint64(1) == 1].sum() if (allowed >> v) & 1 else -1 for v in range(n)])
        v = int(np.argmax(gains))
        chosen |= 1 << v
        keep = (rows >> np.uint64(v)) & np.uint64(1) == 0
        rows, counts = rows[keep], counts[keep]
    return chosen


def _lower_bound(rows: list[int], allowed: int) -> int:
    """max(disjoint-row packing, ceil(|rows| / best single-view coverage))."""
    if not rows:
        return 0
    used = 0
    packing = 0
    for r in rows:
        r &= allowed
        if r & used == 0:
            used |= r
            packing += 1
    best = 0
    a = allowed
    while a:
        low = a & -a
        c = sum(1 for r in rows if r & low)
        best = max(best, c)
        a ^= low
    if best == 0:
        return len(rows) + 1
    return max(packing, -(-len(rows) // best))


class _Timeout(Exception):
    pass


class _Search:
    def __init__(self, n: int, deadline: Optional[float]):
        self.n = n
        self.deadline = deadline
        self.nodes = 0

    def tick(self):
        self.nodes += 1
        if self.deadline is not None and self.nodes % 256 == 0 and time.perf_counter() > self.deadline:
            raise _Timeout

    def minimum(self, rows: list[int], upper: int, upper_bits: int) -> tuple[int, int]:
        """Branch on the row with fewest coverers; returns (best size, best bits)."""
        best = [upper, upper_bits]
        full = (1 << self.n) - 1

        def rec(rows, depth, chosen):
            self.tick()
            if not rows:
                if depth < best[0]:
                    best[0], best[1] = depth, chosen
                return
            if depth + _lower_bound(rows, full) >= best[0]:
                return
            pivot = min(rows, key=lambda r: (bin(r).count("1"), r))
            views = [v for v in range(self.n) if (pivot >> v) & 1]
            views.sort(key=lambda v: (-sum(1 for r in rows if (r >> v) & 1), v))
            for v in views:
                rec([r for r in rows if not (r >> v) & 1], depth + 1, chosen | (1 << v))

        rec(rows, 0, 0)
        return best[0], best[1]

    def lexfirst(self, rows: list[int], k: int) -> Optional[int]:
        """Lexicographically smallest id set of at most ``k`` views covering ``rows``."""
        n = self.n

        def rec(v, rows, k_left, chosen):
            self.tick()
            if not rows:
                return chosen
            if k_left == 0 or v >= n:
                return None
            later = ((1 << n) - 1) & ~((1 << v) - 1)
            if any(r & later == 0 for r in rows):
                return None
            if _lower_bound(rows, later) > k_left:
                return None
            if any((r >> v) & 1 for r in rows):
                found = rec(v + 1, [r for r in rows if not (r >> v) & 1], k_left - 1, chosen | (1 << v))
                if found is not None:
                    return found
            return rec(v + 1, rows, k_left, chosen)

        return rec(0, rows, k, 0)


def solve_exact(inst: CoverInstance, used=None, time_limit: Optional[float] = None) -> CoverSolution:
    """Minimum number of views, outside ``used``, covering what ``used`` leaves uncovered.

    Among optimal selections the one whose sorted id list is
    lexicographically smallest is returned. If ``time_limit`` (seconds)
    runs out, the best selection found so far comes back with
    ``optimal=False``.
    """
    t0 = time.perf_counter()
    rows, counts, used_bits = _residual_rows(inst, used)
    n = inst.n
    if len(rows) == 0:
        return CoverSolution(np.zeros(n, dtype=bool), True, 0, 0, time.perf_counter() - t0)
    allowed = ((1 << n) - 1) & ~used_bits
    greedy = _greedy_bits(rows, counts, n, allowed)
    minimal = _minimal_rows(rows)
    deadline = None if time_limit is None else t0 + time_limit
    search = _Search(n, deadline)
    residual = int(counts.sum())
    try:
        size, bits = search.minimum(minimal, bin(greedy).count("1"), greedy)
    except _Timeout:
        log.warning("set-cover time limit hit after %d nodes; returning greedy cover", search.nodes)
        return CoverSolution(_to_mask(greedy, n), False, residual, search.nodes, time.perf_counter() - t0)
    try:
        lex = search.lexfirst(minimal, size)
        if lex is not None:
            bits = lex
    except _Timeout:
        log.warning("time limit hit during tie-breaking; returning an optimal but not lex-first cover")
    return CoverSolution(_to_mask(bits, n), True, residual, search.nodes, time.perf_counter() - t0)


def solve_greedy(inst: CoverInstance, used=None) -> CoverSolution:
    """Repeatedly take the allowed view covering the most uncovered elements (ties: lowest id)."""
    t0 = time.perf_counter()
    rows, counts, used_bits = _residual_rows(inst, used)
    n = inst.n
    allowed = ((1 << n) - 1) & ~used_bits
    bits = _greedy_bits(rows, counts, n, allowed) if len(rows) else 0
    return CoverSolution(_to_mask(bits, n), False, int(counts.sum()), 0, time.perf_counter() - t0)
