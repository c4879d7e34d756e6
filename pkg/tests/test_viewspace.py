import json

import numpy as np
import pytest

from viewplan.viewspace import ViewSpace, build_viewspace, movement_cost


@pytest.fixture(scope="module")
def space32():
    return build_viewspace(32, 0.4, center=(0.0, 0.0, 0.05), seed=0)


def test_two_views_are_antipodal_on_equator():
    s = build_viewspace(2, 1.0, seed=3)
    # a grid search over two hemisphere points cannot beat pi
    assert s.min_angular_separation() == pytest.approx(np.pi, abs=1e-3)
    np.testing.assert_allclose(s.positions[:, 2], 0.0, atol=1e-3)


def test_rejects_tiny_n():
    with pytest.raises(ValueError):
        build_viewspace(1, 0.4)


def test_positions_on_upper_hemisphere(space32):
    d = np.linalg.norm(space32.positions - space32.center, axis=1)
    np.testing.assert_allclose(d, 0.4, atol=1e-9)
    assert np.all(space32.positions[:, 2] >= space32.center[2] - 1e-12)


def test_views_look_at_center(space32):
    for v in space32.views:
        want = (space32.center - v.position) / np.linalg.norm(space32.center - v.position)
        np.testing.assert_allclose(v.pose.forward, want, atol=1e-9)


def test_packing_quality(space32):
    # a well-spread 32-point hemisphere layout keeps views more than 25 degrees apart
    assert np.degrees(space32.min_angular_separation()) > 25.0


def test_more_views_pack_tighter(space32):
    s33 = build_viewspace(33, 0.4, center=(0.0, 0.0, 0.05), seed=0)
    assert s33.min_angular_separation() <= space32.min_angular_separation()


def test_cost_matrix_is_a_metric(space32):
    c = space32.cost
    np.testing.assert_array_equal(c, c.T)
    assert np.all(np.diag(c) == 0)
    off = c[~np.eye(len(c), dtype=bool)]
    assert np.all(off > 0)
    # explicit triangle inequality c[i,k] <= c[i,j] + c[j,k]
    assert np.all(c[:, None, :] <= c[:, :, None] + c[None, :, :] + 1e-9)


def test_movement_cost_closed_forms(space32):
    a, b = np.array([0.4, 0, 0]), np.array([-0.4, 0, 0])
    assert movement_cost(a, b, 0.4) == pytest.approx(0.4 * np.pi, abs=1e-12)
    v = space32.view(5)
    assert movement_cost(v, v, 0.4, space32.center) == 0.0


def test_movement_cost_matches_numeric_arc(rng):
    for _ in range(20):
        u, v = rng.normal(size=(2, 3))
        u, v = 0.4 * u / np.linalg.norm(u), 0.4 * v / np.linalg.norm(v)
        # walk the slerp path in tiny chords
        ang = np.arccos(np.clip(u @ v / 0.16, -1, 1))
        t = np.linspace(0, 1, 20001)
        path = (np.sin((1 - t) * ang)[:, None] * u + np.sin(t * ang)[:, None] * v) / np.sin(ang)
        length = np.linalg.norm(np.diff(path, axis=0), axis=1).sum()
        assert movement_cost(u, v, 0.4) == pytest.approx(length, abs=1e-9)


def test_cost_matches_movement_cost(space32):
    for i, j in [(0, 1), (3, 17), (30, 31)]:
        assert space32.cost[i, j] == pytest.approx(
            movement_cost(space32.view(i), space32.view(j), 0.4, space32.center), abs=1e-12
        )


def test_save_load_roundtrip(tmp_path, space32):
    space32.save(tmp_path / "a.json")
    back = ViewSpace.load(tmp_path / "a.json")
    np.testing.assert_array_equal(back.positions, space32.positions)
    np.testing.assert_array_equal(back.cost, space32.cost)
    back.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert {"n", "radius", "center", "seed", "positions", "cost"} <= set(doc)


def test_load_rejects_count_mismatch(tmp_path, space32):
    doc = space32.to_dict()
    doc["n"] = 31
    with pytest.raises(ValueError):
        ViewSpace.from_dict(doc)


def test_deterministic_per_seed():
    a = build_viewspace(12, 0.4, seed=5, iterations=300)
    b = build_viewspace(12, 0.4, seed=5, iterations=300)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_recentered_keeps_costs(space32):
    moved = space32.recentered([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(moved.cost, space32.cost)
    np.testing.assert_allclose(np.linalg.norm(moved.positions - moved.center, axis=1), 0.4, atol=1e-12)
