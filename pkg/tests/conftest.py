import sys

import numpy as np
import pytest

from viewplan.config import Config
from viewplan.geometry import toy_objects
from viewplan.pipeline import normalize_object, prepare_object
from viewplan.viewspace import build_viewspace


@pytest.fixture(scope="session")
def small_cfg():
    return Config(n_views=16, alpha=5, D=16, object_size=(0.1, 0.1), extra_samples=8, epochs=20)


@pytest.fixture(scope="session")
def space16(small_cfg):
    return build_viewspace(16, small_cfg.radius, seed=0, iterations=400)


@pytest.fixture(scope="session")
def toy_scenes(small_cfg, space16):
    toys = toy_objects()
    names = ("box", "sphere", "cylinder")
    return {k: prepare_object(k, normalize_object(k, toys[k], small_cfg), space16, small_cfg) for k in names}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
