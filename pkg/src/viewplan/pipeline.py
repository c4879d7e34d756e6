"""End-to-end runs: object preparation, dataset generation, one-shot and NBV planning, budget sweeps."""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from viewplan.config import Config, stage_seed
from viewplan.covering import CoverInstance, InfeasibleCoverError, build_instance, pack_keys, solve_exact
from viewplan.geometry import Mesh, PointCloud, normalize_mesh, quantize, sample_surface
from viewplan.metrics import chamfer, dcd, emd, surface_coverage
from viewplan.occupancy import OccupancyGrid, build_grid
from viewplan.pathing import MAX_DP_VIEWS, Tour, plan_tour, plan_tour_greedy
from viewplan.predictor import FeatureTensor, ViewSetPredictor, featurize, predict
from viewplan.refinement import Refiner, refine
from viewplan.sensor import SensorConfig, accumulate, capture_mask
from viewplan.viewspace import ViewSpace

log = logging.getLogger(__name__)

DATASET_VERSION = 1
SAMPLE_MAGIC = b"VSDS"


# --------------------------------------------------------------------------
# Objects


@dataclass(eq=False)
class Scene:
    """One object with everything the planners need precomputed.

    ``visible[v]`` is the boolean mask of ground-truth samples that view
    ``v`` captures; ``coverable`` is their union.
    """

    name: str
    mesh: Mesh
    gt: PointCloud
    grid: OccupancyGrid
    space: ViewSpace
    visible: np.ndarray
    grid_res: float
    _gt_keys: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._gt_keys = pack_keys(quantize(self.gt.points, self.grid_res))

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def coverable(self) -> np.ndarray:
        return self.visible.any(axis=0)

    def capture(self, v: int) -> PointCloud:
        return self.gt.subset(np.flatnonzero(self.visible[v])).with_source(v)

    def observed(self, views: Sequence[int]) -> PointCloud:
        return accumulate([self.capture(v) for v in views], self.grid_res)

    def coverage(self, views: Sequence[int]) -> float:
        return surface_coverage(self.observed(views), self.gt, self.grid_res, self.coverable)

    def coverable_voxels(self) -> np.ndarray:
        return np.unique(self._gt_keys[self.coverable])

    def seen_voxels(self, views: Sequence[int]) -> np.ndarray:
        mask = self.visible[list(views)].any(axis=0) if len(views) else np.zeros(len(self.gt), dtype=bool)
        return np.unique(self._gt_keys[mask])


def sensor_config(cfg: Config) -> SensorConfig:
    return SensorConfig(point_spacing=cfg.spacing, max_range=cfg.max_range)


def normalize_object(name: str, mesh: Mesh, cfg: Config) -> Mesh:
    """Scale to a seeded size within ``cfg.object_size`` and stand it on the table."""
    lo, hi = cfg.object_size
    size = lo if lo == hi else float(np.random.default_rng(stage_seed(cfg.seed, f"size:{name}")).uniform(lo, hi))
    return normalize_mesh(mesh.oriented_outward(), size)


def prepare_object(name: str, mesh: Mesh, space: ViewSpace, cfg: Config) -> Scene:
    """Sample ground truth, voxelize it and record what every candidate view sees.

    ``mesh`` must already be normalized; the view space is recentered on
    its bounding-box center.
    """
    mesh = mesh.oriented_outward()
    gt = sample_surface(mesh, cfg.spacing, seed=stage_seed(cfg.seed, f"gt:{name}"))
    grid = build_grid(gt, cfg.grid_res, padding=cfg.grid_res)
    space = space.recentered(mesh.center)
    scfg = sensor_config(cfg)
    visible = np.array([capture_mask(gt, grid, v, scfg) for v in space.views], dtype=bool)
    return Scene(name, mesh, gt, grid, space, visible, cfg.grid_res)


def make_refiner(cfg: Config) -> Refiner:
    return Refiner.from_dict(cfg.refiner)


def refined_views(scene: Scene, refiner: Refiner) -> list[PointCloud]:
    return [refine(refiner, scene.capture(v), scene.gt) for v in range(scene.n)]


def scene_instance(scene: Scene, refiner: Refiner, alpha: int) -> CoverInstance:
    return build_instance(refined_views(scene, refiner), scene.gt, scene.grid_res, alpha)


def map_ordered(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally across processes; order is always preserved."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Dataset


@dataclass(eq=False)
class DatasetSample:
    object_id: str
    view_state: np.ndarray
    label: np.ndarray
    feature: FeatureTensor
    optimal: bool = True

    @property
    def used(self) -> list[int]:
        return np.flatnonzero(self.view_state).tolist()

    @property
    def label_views(self) -> list[int]:
        return np.flatnonzero(self.label).tolist()


def sample_inputs(n: int, max_k: int, extra: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Input view subsets with a long tail in size.

    Every single view is enumerated. Up to ``extra`` further distinct
    subsets are drawn with size ``k`` in ``[2, max_k]`` at probability
    proportional to ``1/k`` and members uniform given ``k``.
    """
    inputs = [(v,) for v in range(n)]
    if max_k < 2 or extra == 0:
        return inputs
    ks = np.arange(2, max_k + 1)
    pk = (1.0 / ks) / np.sum(1.0 / ks)
    seen = set(inputs)
    for _ in range(extra):
        k = int(rng.choice(ks, p=pk))
        subset = tuple(sorted(int(v) for v in rng.choice(n, size=k, replace=False)))
        if subset not in seen:
            seen.add(subset)
            inputs.append(subset)
    return inputs


def object_samples(scene: Scene, refiner: Refiner, cfg: Config) -> list[DatasetSample]:
    inst = scene_instance(scene, refiner, cfg.alpha)
    rng = np.random.default_rng(stage_seed(cfg.seed, f"inputs:{scene.name}"))
    inputs = sample_inputs(scene.n, cfg.tail_max_k, cfg.extra_samples, rng)
    origin = (scene.mesh.center[0], scene.mesh.center[1], scene.mesh.bbox[0][2])
    out = []
    for used in inputs:
        state = np.zeros(scene.n, dtype=bool)
        state[list(used)] = True
        try:
            sol = solve_exact(inst, used=state, time_limit=cfg.solver_time_limit)
        except InfeasibleCoverError as e:
            log.warning("%s: input %s leaves %d voxels uncoverable; skipped", scene.name, used, len(e.keys))
            continue
        observed = refine(refiner, scene.observed(used), scene.gt)
        if len(observed) == 0:
            log.warning("%s: input %s observes nothing; skipped", scene.name, used)
            continue
        feat = featurize(observed, state, cfg.D, cfg.half_extent, origin)
        out.append(DatasetSample(scene.name, state, sol.mask.copy(), feat, sol.optimal))
    return out


def generate_dataset(scenes: Sequence[Scene], refiner: Refiner, cfg: Config, jobs: int = 1) -> list[DatasetSample]:
    """Labelled inputs for every object; samples come out grouped by object in input order."""
    per_object = map_ordered(_ObjectSamples(refiner, cfg), list(scenes), jobs)
    return [s for group in per_object for s in group]


class _ObjectSamples:
    def __init__(self, refiner, cfg):
        self.refiner, self.cfg = refiner, cfg

    def __call__(self, scene):
        return object_samples(scene, self.refiner, self.cfg)


def _sample_bytes(s: DatasetSample) -> bytes:
    head = SAMPLE_MAGIC + struct.pack("<III", DATASET_VERSION, s.feature.D, len(s.view_state))
    body = [
        np.packbits(s.view_state).tobytes(),
        np.packbits(s.label).tobytes(),
        np.packbits(s.feature.occupancy.reshape(-1)).tobytes(),
    ]
    return head + b"".join(body)


def _sample_from_bytes(data: bytes, object_id: str, optimal: bool, where: str) -> DatasetSample:
    if data[:4] != SAMPLE_MAGIC:
        raise ValueError(f"{where}: not a dataset sample file")
    version, D, n = struct.unpack("<III", data[4:16])
    if version != DATASET_VERSION:
        raise ValueError(f"{where}: unsupported sample version {version}")
    nb = (n + 7) // 8
    ob = (D**3 + 7) // 8
    if len(data) != 16 + 2 * nb + ob:
        raise ValueError(f"{where}: size {len(data)} does not match D={D}, n={n}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=16)
    state = np.unpackbits(raw[:nb], count=n).astype(bool)
    label = np.unpackbits(raw[nb : 2 * nb], count=n).astype(bool)
    occ = np.unpackbits(raw[2 * nb :], count=D**3).reshape(D, D, D)
    return DatasetSample(object_id, state, label, FeatureTensor(occ, state), optimal)


def save_dataset(samples: Sequence[DatasetSample], directory, meta: Optional[dict] = None) -> None:
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        rel = f"samples/{i:06d}.bin"
        (directory / rel).write_bytes(_sample_bytes(s))
        entries.append(
            {"file": rel, "object": s.object_id, "view_state": s.used, "label": s.label_views, "optimal": bool(s.optimal)}
        )
    manifest = {"version": DATASET_VERSION, "count": len(entries), "meta": meta or {}, "samples": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_dataset(directory) -> tuple[list[DatasetSample], dict]:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"{path} does not exist")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {manifest.get('version')}")
    samples = []
    for e in manifest["samples"]:
        s = _sample_from_bytes((directory / e["file"]).read_bytes(), e["object"], e.get("optimal", True), e["file"])
        if s.used != e["view_state"] or s.label_views != e["label"]:
            raise ValueError(f"{e['file']}: contents disagree with the manifest")
        samples.append(s)
    return samples, manifest.get("meta", {})


# --------------------------------------------------------------------------
# Runs


@dataclass
class RunRecord:
    object_id: str
    method: str
    init_view: int
    views: list
    leg_costs: list
    cum_costs: list
    coverage: list
    planned: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    cd: Optional[float] = None
    emd: Optional[float] = None
    dcd: Optional[float] = None
    step_cd: list = field(default_factory=list)
    step_dcd: list = field(default_factory=list)

    @property
    def required_views(self) -> int:
        return len(self.views)

    @property
    def tour_cost(self) -> float:
        return self.cum_costs[-1]

    @property
    def final_coverage(self) -> float:
        return self.coverage[-1]

    def steps_within(self, budget: float) -> int:
        """Number of views (init included) reachable before the movement cost exceeds ``budget``."""
        return int(np.searchsorted(np.asarray(self.cum_costs), budget, side="right"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["required_views"] = self.required_views
        d["tour_cost"] = self.tour_cost
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in keys})


def write_records(records: Sequence[RunRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path) as fh:
        for i, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(RunRecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError) as e:
                    raise ValueError(f"{path}:{i}: bad run record ({e})") from None
    return out


def _replay(scene: Scene, order: Sequence[int], refiner: Refiner, cfg: Config, distances: bool, step_distances: bool):
    """Coverage after each step of ``order`` and distance metrics of the refined final observation."""
    cost = scene.space.cost
    legs = [float(cost[a, b]) for a, b in zip(order[:-1], order[1:])]
    cum = np.concatenate([[0.0], np.cumsum(legs)]).tolist()
    target = scene.coverable_voxels()
    seen = np.zeros(0, dtype=np.int64)
    coverage = []
    step_cd, step_dcd = [], []
    for k, v in enumerate(order):
        seen = np.union1d(seen, scene.seen_voxels([v]))
        coverage.append(float(np.isin(target, seen).sum() / len(target)))
        if step_distances:
            dense = refine(refiner, scene.observed(order[: k + 1]), scene.gt)
            step_cd.append(chamfer(dense, scene.gt, cfg.cd_samples, cfg.seed))
            step_dcd.append(dcd(dense, scene.gt, cfg.dcd_temperature, cfg.cd_samples, cfg.seed))
    metrics = {}
    if distances:
        dense = refine(refiner, scene.observed(order), scene.gt)
        metrics = {
            "cd": chamfer(dense, scene.gt, cfg.cd_samples, cfg.seed),
            "emd": emd(dense, scene.gt, cfg.emd_samples, cfg.seed),
            "dcd": dcd(dense, scene.gt, cfg.dcd_temperature, cfg.cd_samples, cfg.seed),
        }
    return legs, cum, coverage, metrics, step_cd, step_dcd


def _tour(space: ViewSpace, chosen, start: int) -> Tour:
    ids = set(int(v) for v in np.flatnonzero(chosen)) - {start}
    if len(ids) + 1 > MAX_DP_VIEWS:
        log.warning("%d views exceed the exact tour limit; using the nearest-neighbour order", len(ids) + 1)
        return plan_tour_greedy(space, chosen, start)
    return plan_tour(space, chosen, start)


def plan_views(
    scene: Scene,
    refiner: Refiner,
    planner: str,
    init_view: int,
    cfg: Config,
    model: Optional[ViewSetPredictor] = None,
    instance: Optional[CoverInstance] = None,
) -> np.ndarray:
    """Boolean mask of the views to visit after ``init_view``."""
    state = np.zeros(scene.n, dtype=bool)
    state[init_view] = True
    if planner == "scop_oracle":
        inst = instance if instance is not None else scene_instance(scene, refiner, cfg.alpha)
        return solve_exact(inst, used=state, time_limit=cfg.solver_time_limit).mask.copy()
    if planner == "predictor":
        if model is None:
            raise ValueError("the predictor planner needs a trained model")
        observed = refine(refiner, scene.capture(init_view), scene.gt)
        if len(observed) == 0:
            return np.zeros(scene.n, dtype=bool)
        origin = (scene.mesh.center[0], scene.mesh.center[1], scene.mesh.bbox[0][2])
        mask, _ = predict(model, featurize(observed, state, model.D_, cfg.half_extent, origin))
        mask = mask.copy()
        mask[init_view] = False
        return mask
    raise ValueError(f"unknown planner {planner!r}; expected scop_oracle or predictor")


def run_oneshot(
    scene: Scene,
    refiner: Refiner,
    planner: str,
    init_view: int,
    cfg: Config,
    model: Optional[ViewSetPredictor] = None,
    distances: bool = False,
    step_distances: bool = False,
    instance: Optional[CoverInstance] = None,
) -> RunRecord:
    """Observe from ``init_view``, plan the whole view set at once, then visit it along a shortest tour."""
    if not 0 <= init_view < scene.n:
        raise ValueError(f"init view {init_view} out of range [0, {scene.n})")
    chosen = plan_views(scene, refiner, planner, init_view, cfg, model, instance)
    flags = [] if chosen.any() else ["no-op plan"]
    tour = _tour(scene.space, chosen, init_view)
    legs, cum, coverage, metrics, step_cd, step_dcd = _replay(
        scene, tour.order, refiner, cfg, distances, step_distances
    )
    method = "oneshot_" + ("scop" if planner == "scop_oracle" else "predictor")
    return RunRecord(
        scene.name, method, init_view, list(tour.order), legs, cum, coverage,
        np.flatnonzero(chosen).tolist(), flags, step_cd=step_cd, step_dcd=step_dcd, **metrics,
    )


def nbv_order(scene: Scene, init_view: int, steps: int, target_coverage: Optional[float] = None) -> list[int]:
    """Greedy views maximizing newly seen coverable voxels (ground-truth utility); ties go to the lowest id."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    target = scene.coverable_voxels()
    per_view = [np.intersect1d(scene.seen_voxels([v]), target, assume_unique=True) for v in range(scene.n)]
    order = [init_view]
    seen = per_view[init_view]
    for _ in range(min(steps, scene.n - 1)):
        if target_coverage is not None and len(seen) >= target_coverage * len(target) - 1e-12:
            break
        best, best_gain = None, -1
        for v in range(scene.n):
            if v in order:
                continue
            gain = len(per_view[v]) - int(np.isin(per_view[v], seen, assume_unique=True).sum())
            if gain > best_gain:
                best, best_gain = v, gain
        order.append(best)
        seen = np.union1d(seen, per_view[best])
    return order


def run_nbv_baseline(
    scene: Scene,
    init_view: int,
    steps: int,
    cfg: Config,
    refiner: Optional[Refiner] = None,
    target_coverage: Optional[float] = None,
    distances: bool = False,
    step_distances: bool = False,
) -> RunRecord:
    """Coverage-greedy next-best-view run with local moves, for relative comparison."""
    if not 0 <= init_view < scene.n:
        raise ValueError(f"init view {init_view} out of range [0, {scene.n})")
    refiner = refiner or make_refiner(cfg)
    order = nbv_order(scene, init_view, steps, target_coverage)
    legs, cum, coverage, metrics, step_cd, step_dcd = _replay(scene, order, refiner, cfg, distances, step_distances)
    return RunRecord(scene.name, "nbv_greedy", init_view, order, legs, cum, coverage, order[1:], [],
                     step_cd=step_cd, step_dcd=step_dcd, **metrics)


def sweep_records(records: Sequence[RunRecord], budgets: Sequence[float]) -> list[dict]:
    """Coverage (and distances, if recorded per step) of every run truncated at each budget."""
    if list(budgets) != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    rows = []
    for r in records:
        for b in budgets:
            k = max(r.steps_within(b), 1)
            row = {
                "object": r.object_id,
                "method": r.method,
                "budget": float(b),
                "views": k,
                "movement_cost": r.cum_costs[k - 1],
                "coverage": r.coverage[k - 1],
            }
            if r.step_cd:
                row["cd"] = r.step_cd[k - 1]
            if r.step_dcd:
                row["dcd"] = r.step_dcd[k - 1]
            rows.append(row)
    return rows


def run_budget_sweep(
    scenes: Sequence[Scene],
    methods: Sequence[str],
    budgets: Sequence[float],
    cfg: Config,
    init_view: int = 0,
    model: Optional[ViewSetPredictor] = None,
    step_distances: bool = False,
) -> tuple[list[RunRecord], list[dict]]:
    """Run every method once per object, then truncate each run at every budget."""
    refiner = make_refiner(cfg)
    records = []
    for scene in scenes:
        for m in methods:
            if m == "nbv":
                records.append(run_nbv_baseline(scene, init_view, scene.n - 1, cfg, refiner, step_distances=step_distances))
            else:
                planner = {"scop": "scop_oracle", "predictor": "predictor"}.get(m, m)
                records.append(run_oneshot(scene, refiner, planner, init_view, cfg, model, step_distances=step_distances))
    return records, sweep_records(records, budgets)
