"""Command-line interface: ``viewplan <command> [options]``.

Exit codes: 0 success, 2 bad usage or input, 3 infeasible cover, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from viewplan.config import CONFIG_ENV, Config, load_config
from viewplan.covering import InfeasibleCoverError
from viewplan.geometry import MeshContentError, MeshFormatError, load_mesh, save_obj, toy_objects
from viewplan.metrics import EvalReport
from viewplan.pipeline import (
    Scene,
    generate_dataset,
    load_dataset,
    make_refiner,
    map_ordered,
    normalize_object,
    prepare_object,
    read_records,
    run_nbv_baseline,
    run_oneshot,
    save_dataset,
    sweep_records,
    write_records,
)
from viewplan.predictor import ViewSetPredictor, train
from viewplan.viewspace import ViewSpace, build_viewspace

log = logging.getLogger("viewplan")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _config(args) -> Config:
    path = args.config or os.environ.get(CONFIG_ENV) or None
    cfg = load_config(path)
    overrides = {}
    for key in ("n_views", "radius", "seed", "alpha", "D", "lam", "epochs", "lr", "hidden", "batch_size",
                "extra_samples", "max_k", "grid_res", "spacing", "viewspace_iterations"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "refiner", None):
        overrides["refiner"] = {**cfg.refiner, "kind": args.refiner}
    if getattr(args, "budgets", None):
        overrides["budgets"] = args.budgets
    return cfg.updated(**overrides)


def _load_objects(specs: Sequence[str]) -> list[tuple[str, object]]:
    """``toy:NAME``, ``toy:all``, a mesh file, or a directory of .obj/.ply files; sorted by name."""
    toys = toy_objects()
    out = {}
    for spec in specs:
        if spec.startswith("toy:"):
            name = spec[4:]
            names = sorted(toys) if name == "all" else [name]
            for nm in names:
                if nm not in toys:
                    raise UsageError(f"unknown toy object {nm!r}; choose from {', '.join(sorted(toys))}")
                out[nm] = toys[nm]
            continue
        path = Path(spec)
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".obj", ".ply")) if path.is_dir() else [path]
        if path.is_dir() and not files:
            raise UsageError(f"{path}: no .obj or .ply meshes found")
        for f in files:
            if not f.is_file():
                raise UsageError(f"{f}: no such file")
            out[f.stem] = load_mesh(f)
    if not out:
        raise UsageError("no objects given")
    return sorted(out.items())


def _viewspace(args, cfg: Config) -> ViewSpace:
    if getattr(args, "viewspace", None):
        path = Path(args.viewspace)
        if not path.is_file():
            raise UsageError(f"{path}: no such view space file")
        space = ViewSpace.load(path)
        if space.n != cfg.n_views:
            log.info("view space file has %d views; overriding n_views=%d", space.n, cfg.n_views)
        return space
    return build_viewspace(cfg.n_views, cfg.radius, seed=cfg.seed, iterations=cfg.viewspace_iterations)


class _Prepare:
    def __init__(self, space, cfg):
        self.space, self.cfg = space, cfg

    def __call__(self, item):
        name, mesh = item
        return prepare_object(name, normalize_object(name, mesh, self.cfg), self.space, self.cfg)


def _scenes(args, cfg: Config, space: ViewSpace) -> list[Scene]:
    objects = _load_objects(args.objects)
    return map_ordered(_Prepare(space, cfg), objects, args.jobs)


def _dump(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_viewspace(args) -> int:
    cfg = _config(args)
    space = build_viewspace(cfg.n_views, cfg.radius, seed=cfg.seed, iterations=cfg.viewspace_iterations)
    space.save(args.out)
    print(f"wrote {space.n} views at radius {space.radius} to {args.out}")
    return EXIT_OK


def cmd_make_toys(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, mesh in sorted(toy_objects().items()):
        save_obj(mesh, out / f"{name}.obj")
    print(f"wrote {len(toy_objects())} meshes to {out}")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = _config(args)
    space = _viewspace(args, cfg)
    cfg = cfg.updated(n_views=space.n)
    scenes = _scenes(args, cfg, space)
    samples = generate_dataset(scenes, make_refiner(cfg), cfg, jobs=args.jobs)
    meta = {"config": cfg.to_dict(), "objects": [s.name for s in scenes], "viewspace": space.to_dict()}
    save_dataset(samples, args.out, meta)
    print(f"wrote {len(samples)} samples for {len(scenes)} objects to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    samples, _ = load_dataset(args.dataset)
    if not samples:
        raise UsageError(f"{args.dataset}: dataset is empty")
    data = [(s.feature, s.label) for s in samples]
    model, report = train(data, lam=cfg.lam, epochs=cfg.epochs, lr=cfg.lr, seed=cfg.seed,
                          hidden=cfg.hidden, batch_size=cfg.batch_size)
    model.save(args.out)
    report.write_csv(args.report or str(Path(args.out).with_suffix(".csv")))
    best, final = report.best, report.final
    print(f"final epoch {final['epoch']}: precision {final['precision']:.4f} recall {final['recall']:.4f} f1 {final['f1']:.4f}")
    print(f"best epoch {best['epoch']}: precision {best['precision']:.4f} recall {best['recall']:.4f} f1 {best['f1']:.4f}")
    return EXIT_OK


class _Plan:
    def __init__(self, planner, init_view, cfg, model, steps, target, distances):
        self.planner, self.init_view, self.cfg, self.model = planner, init_view, cfg, model
        self.steps, self.target, self.distances = steps, target, distances

    def __call__(self, scene):
        refiner = make_refiner(self.cfg)
        if self.planner == "nbv":
            steps = self.steps if self.steps is not None else scene.n - 1
            return run_nbv_baseline(scene, self.init_view, steps, self.cfg, refiner, self.target,
                                    distances=self.distances, step_distances=self.distances)
        planner = "scop_oracle" if self.planner == "scop" else "predictor"
        return run_oneshot(scene, refiner, planner, self.init_view, self.cfg, self.model,
                           distances=self.distances, step_distances=self.distances)


def cmd_plan(args) -> int:
    cfg = _config(args)
    model = None
    if args.planner == "predictor":
        if not args.model:
            raise UsageError("--planner predictor needs --model")
        if not Path(args.model).is_file():
            raise UsageError(f"{args.model}: no such model file")
        model = ViewSetPredictor.load(args.model)
    space = _viewspace(args, cfg)
    cfg = cfg.updated(n_views=space.n)
    if model is not None and model.n_views_ != space.n:
        raise UsageError(f"model predicts {model.n_views_} views but the view space has {space.n}")
    if not 0 <= args.init_view < space.n:
        raise UsageError(f"--init-view {args.init_view} out of range [0, {space.n})")
    if args.steps is not None and args.steps < 1:
        raise UsageError("--steps must be at least 1")
    scenes = _scenes(args, cfg, space)
    records = map_ordered(
        _Plan(args.planner, args.init_view, cfg, model, args.steps, args.target_coverage, not args.no_distances),
        scenes, args.jobs,
    )
    write_records(records, args.out)
    for r in records:
        print(json.dumps({"object": r.object_id, "method": r.method, "views": r.views,
                          "tour_cost": round(r.tour_cost, 6), "coverage": round(r.final_coverage, 6),
                          "flags": r.flags}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    records = []
    for path in args.runs:
        if not Path(path).is_file():
            raise UsageError(f"{path}: no such run file")
        records.extend(read_records(path))
    if not records:
        raise UsageError("no run records to evaluate")
    records.sort(key=lambda r: (r.method, r.object_id, r.init_view))
    report = EvalReport()
    report.metadata["budgets"] = cfg.budgets
    for r in records:
        report.add(object=r.object_id, method=r.method, init_view=r.init_view,
                   surface_coverage=r.final_coverage, required_views=r.required_views,
                   movement_cost=r.tour_cost, cd=r.cd, emd=r.emd, dcd=r.dcd)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "table.csv")
    report.write_json(out / "table.json")
    _write_sweep(sweep_records(records, cfg.budgets), out / "sweep.csv")
    print(f"evaluated {len(records)} runs into {out}")
    return EXIT_OK


def _write_sweep(rows: list[dict], path: Path) -> None:
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["method"], row["budget"]), []).append(row)
    cols = ["coverage", "views", "movement_cost", "cd", "dcd"]
    lines = ["method,budget,objects," + ",".join(f"{c}_mean,{c}_std" for c in cols)]
    for (method, budget), rs in sorted(groups.items()):
        cells = [method, f"{budget:.3f}", str(len(rs))]
        for c in cols:
            vals = np.array([r[c] for r in rs if c in r], dtype=float)
            cells += [f"{vals.mean():.6f}", f"{vals.std():.6f}"] if len(vals) else ["", ""]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viewplan", description=__doc__.splitlines()[0])
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, else built-in defaults)")
    p.add_argument("--log-file", help="write a timestamped log here")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, help="master seed")
        return sp

    def scene_args(sp):
        sp.add_argument("--objects", nargs="+", required=True,
                        help="mesh files, directories of meshes, toy:NAME or toy:all")
        sp.add_argument("--viewspace", help="view space JSON (default: build one from the config)")
        sp.add_argument("--n-views", dest="n_views", type=int, help="views when building the view space")
        sp.add_argument("--radius", type=float, help="view sphere radius in meters")
        sp.add_argument("--alpha", type=int, help="minimum views that must see a voxel")
        sp.add_argument("--grid-res", dest="grid_res", type=float, help="voxel size in meters")
        sp.add_argument("--spacing", type=float, help="surface sample spacing in meters")
        sp.add_argument("--refiner", choices=("identity", "oracle_dilation"), help="refiner kind")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for per-object work")

    sp = common(sub.add_parser("viewspace", help="build a hemispherical candidate view space"))
    sp.add_argument("--n", dest="n_views", type=int, help="number of views (>= 2)")
    sp.add_argument("--radius", type=float, help="sphere radius in meters")
    sp.add_argument("--iterations", dest="viewspace_iterations", type=int, help="repulsion iterations")
    sp.add_argument("--out", default="viewspace.json", help="output JSON path")
    sp.set_defaults(func=cmd_viewspace)

    sp = sub.add_parser("make-toys", help="write the built-in toy meshes as OBJ files")
    sp.add_argument("--out", default="toys", help="output directory")
    sp.set_defaults(func=cmd_make_toys)

    sp = common(sub.add_parser("gen-dataset", help="generate set-covering training samples"))
    scene_args(sp)
    sp.add_argument("--D", type=int, help="feature grid size")
    sp.add_argument("--extra-samples", dest="extra_samples", type=int, help="multi-view inputs drawn per object")
    sp.add_argument("--max-k", dest="max_k", type=int, help="largest input subset size")
    sp.add_argument("--out", required=True, help="dataset directory")
    sp.set_defaults(func=cmd_gen_dataset)

    sp = common(sub.add_parser("train", help="train the view-set predictor"))
    sp.add_argument("--dataset", required=True, help="dataset directory")
    sp.add_argument("--lam", type=float, help="positive-slot loss weight")
    sp.add_argument("--epochs", type=int, help="training epochs")
    sp.add_argument("--lr", type=float, help="SGD learning rate")
    sp.add_argument("--hidden", type=int, help="hidden width")
    sp.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch size")
    sp.add_argument("--out", default="model.bin", help="model file")
    sp.add_argument("--report", help="per-epoch CSV (default: model path with .csv)")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("plan", help="plan and simulate a run per object"))
    scene_args(sp)
    sp.add_argument("--planner", choices=("scop", "predictor", "nbv"), default="scop", help="view planner")
    sp.add_argument("--model", help="trained model (predictor planner)")
    sp.add_argument("--init-view", dest="init_view", type=int, default=0, help="initial view id")
    sp.add_argument("--steps", type=int, help="NBV steps (default: all remaining views)")
    sp.add_argument("--target-coverage", dest="target_coverage", type=float, help="stop NBV at this coverage")
    sp.add_argument("--no-distances", action="store_true", help="skip CD/EMD/DCD")
    sp.add_argument("--out", default="runs.jsonl", help="run records (JSON lines)")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("eval", help="summarize run records into table and budget-sweep CSVs")
    sp.add_argument("--runs", nargs="*", default=[], help="run record files (JSON lines)")
    sp.add_argument("--budgets", nargs="+", type=float, help="movement budgets in meters, ascending")
    sp.add_argument("--out", default="eval", help="output directory")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = [logging.StreamHandler(sys.stderr)]
    handlers[0].setLevel(logging.INFO if args.verbose else logging.WARNING)
    if args.log_file:
        fh = logging.FileHandler(args.log_file)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handlers.append(fh)
    logging.basicConfig(level=logging.INFO, handlers=handlers, force=True)
    try:
        return args.func(args)
    except InfeasibleCoverError as e:
        diag = {"error": "infeasible", "uncoverable_voxels": len(e.keys), "keys": np.asarray(e.keys).tolist()[:100]}
        sys.stderr.write(json.dumps(diag) + "\n")
        return EXIT_INFEASIBLE
    except (UsageError, ValueError, FileNotFoundError, MeshFormatError, MeshContentError) as e:
        print(f"viewplan {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"viewplan {args.command}: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
