import json
import subprocess
import sys

import numpy as np
import pytest

import viewplan.pipeline as pl
from viewplan.cli import build_parser, main
from viewplan.covering import InfeasibleCoverError

COMMANDS = ["viewspace", "make-toys", "gen-dataset", "train", "plan", "eval"]


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_exits_zero_and_lists_flags(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        main([cmd, "--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in out


def test_top_level_help(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    assert all(c in out for c in COMMANDS)


def test_viewspace_bad_n(tmp_path, capsys):
    assert main(["viewspace", "--n", "1", "--out", str(tmp_path / "v.json")]) == 2
    assert "n_views" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["viewspace", "--bogus"])
    assert e.value.code == 2


def test_missing_inputs(tmp_path):
    assert main(["eval", "--out", str(tmp_path / "e")]) == 2
    assert main(["eval", "--runs", str(tmp_path / "none.jsonl")]) == 2
    assert main(["train", "--dataset", str(tmp_path / "nope")]) == 2
    assert main(["plan", "--objects", str(tmp_path / "nope.obj"), "--n-views", "4"]) == 2
    assert main(["plan", "--objects", "toy:teapot", "--n-views", "4"]) == 2
    assert main(["plan", "--planner", "predictor", "--objects", "toy:box"]) == 2


def test_bad_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"alpha": 0}')
    assert main(["--config", str(cfg), "viewspace", "--out", str(tmp_path / "v.json")]) == 2
    monkeypatch.setenv("VIEWPLAN_CONFIG", str(cfg))
    assert main(["viewspace", "--out", str(tmp_path / "v.json")]) == 2


def test_env_config_and_flag_override(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"n_views": 5, "radius": 0.3, "viewspace_iterations": 50}')
    monkeypatch.setenv("VIEWPLAN_CONFIG", str(cfg))
    assert main(["viewspace", "--out", str(tmp_path / "a.json")]) == 0
    assert json.loads((tmp_path / "a.json").read_text())["n"] == 5
    assert main(["viewspace", "--n", "7", "--out", str(tmp_path / "b.json")]) == 0
    doc = json.loads((tmp_path / "b.json").read_text())
    assert doc["n"] == 7 and doc["radius"] == 0.3


def test_infeasible_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise InfeasibleCoverError(np.array([[1, 2, 3]]))

    monkeypatch.setattr(pl, "solve_exact", boom)
    code = main(["plan", "--objects", "toy:box", "--n-views", "4", "--out", str(tmp_path / "r.jsonl")])
    assert code == 3
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["error"] == "infeasible" and diag["keys"] == [[1, 2, 3]]


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(pl, "solve_exact", boom)
    assert main(["plan", "--objects", "toy:box", "--n-views", "4", "--out", str(tmp_path / "r.jsonl")]) == 4


def test_make_toys_then_plan_from_directory(tmp_path, capsys):
    assert main(["make-toys", "--out", str(tmp_path / "toys")]) == 0
    assert (tmp_path / "toys" / "box.obj").is_file()
    vs = tmp_path / "vs.json"
    assert main(["viewspace", "--n", "8", "--out", str(vs)]) == 0
    capsys.readouterr()
    assert main(["plan", "--objects", str(tmp_path / "toys" / "box.obj"), "--viewspace", str(vs), "--alpha", "3",
                 "--out", str(tmp_path / "r.jsonl")]) == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert line["object"] == "box" and line["views"][0] == 0 and line["coverage"] > 0.9


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "viewplan.cli", *args], cwd=cwd, capture_output=True, text=True)


@pytest.mark.slow
def test_pipeline_commands_are_byte_deterministic(tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        steps = [
            ["viewspace", "--n", "8", "--seed", "3", "--out", "vs.json"],
            ["gen-dataset", "--objects", "toy:box", "toy:cone", "--viewspace", "vs.json", "--alpha", "3", "--D", "8",
             "--extra-samples", "4", "--seed", "3", "--out", "ds"],
            ["train", "--dataset", "ds", "--epochs", "5", "--hidden", "8", "--seed", "3", "--out", "m.bin"],
            ["plan", "--objects", "toy:box", "--viewspace", "vs.json", "--alpha", "3", "--seed", "3", "--out", "scop.jsonl"],
            ["plan", "--planner", "predictor", "--model", "m.bin", "--objects", "toy:box", "--viewspace", "vs.json",
             "--seed", "3", "--out", "pred.jsonl"],
            ["plan", "--planner", "nbv", "--objects", "toy:box", "--viewspace", "vs.json", "--seed", "3",
             "--out", "nbv.jsonl"],
            ["eval", "--runs", "scop.jsonl", "pred.jsonl", "nbv.jsonl", "--out", "ev"],
        ]
        for s in steps:
            res = run_cli(s, d)
            assert res.returncode == 0, res.stderr
        outputs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    assert outputs[0].keys() == outputs[1].keys()
    for k in outputs[0]:
        assert outputs[0][k] == outputs[1][k], k
