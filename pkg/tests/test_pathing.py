import itertools

import numpy as np
import pytest

from viewplan.pathing import MAX_DP_VIEWS, Tour, TourSizeError, plan_tour, plan_tour_greedy
from viewplan.viewspace import build_viewspace, cost_matrix


@pytest.fixture(scope="module")
def space():
    return build_viewspace(32, 0.4, seed=1)


def brute_force(cost, start, views):
    best = None
    for perm in itertools.permutations(views):
        order = (start,) + perm
        c = sum(cost[a, b] for a, b in zip(order[:-1], order[1:]))
        if best is None or c < best[0] - 1e-12:
            best = (c, order)
    return best


def test_matches_permutation_search(space, rng):
    for _ in range(40):
        ids = rng.choice(32, size=7, replace=False)
        start, rest = int(ids[0]), sorted(int(v) for v in ids[1:])
        tour = plan_tour(space, rest, start)
        cost, _ = brute_force(space.cost, start, rest)
        assert tour.total_cost == pytest.approx(cost, abs=1e-9)
        assert sorted(tour.order) == sorted([start] + rest) and tour.order[0] == start
        assert tour.total_cost == pytest.approx(sum(tour.per_leg_costs), abs=1e-12)


def test_one_view(space):
    t = plan_tour(space, [7], 2)
    assert t.order == (2, 7)
    assert t.total_cost == space.cost[2, 7]
    assert plan_tour_greedy(space, [7], 2) == t


def test_great_circle_order():
    ang = np.radians([0.0, 40.0, 90.0])
    units = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(3)])
    cost = cost_matrix(units, 0.4)
    assert plan_tour(cost, [1, 2], 0).order == (0, 1, 2)


def test_greedy_never_cheaper(space, rng):
    for _ in range(30):
        ids = rng.choice(32, size=9, replace=False)
        dp = plan_tour(space, ids[1:], int(ids[0]))
        gr = plan_tour_greedy(space, ids[1:], int(ids[0]))
        assert gr.total_cost >= dp.total_cost - 1e-12


def test_equidistant_ties_go_to_lowest_id():
    cost = np.ones((4, 4)) - np.eye(4)
    assert plan_tour_greedy(cost, [3, 1, 2], 0).order == (0, 1, 2, 3)
    assert plan_tour(cost, [3, 1, 2], 0).order == (0, 1, 2, 3)


def test_mask_and_ids_agree(space):
    mask = np.zeros(32, bool)
    mask[[4, 9, 20]] = True
    assert plan_tour(space, mask, 0) == plan_tour(space, [20, 4, 9], 0)


def test_start_only(space):
    t = plan_tour(space, [], 5)
    assert t.order == (5,) and t.total_cost == 0.0


def test_size_limit(space):
    with pytest.raises(TourSizeError, match="greedy"):
        plan_tour(space, list(range(1, MAX_DP_VIEWS + 1)), 0)


def test_bad_ids(space):
    with pytest.raises(ValueError):
        plan_tour(space, [40], 0)
    with pytest.raises(ValueError):
        plan_tour(space, [1], 99)


def test_prefix_within(space):
    t = plan_tour(space, [3, 8, 12, 19], 0)
    assert t.prefix_within(0.0).order == (0,)
    assert t.prefix_within(np.inf) == t
    cum = np.cumsum(t.per_leg_costs)
    mid = t.prefix_within(cum[1] + 1e-9)
    assert mid.order == t.order[:3]


def test_to_dict_roundtrip(space, tmp_path):
    t = plan_tour(space, [3, 8], 0)
    t.save(tmp_path / "t.json")
    import json
    d = json.loads((tmp_path / "t.json").read_text())
    assert Tour.from_order(d["order"], space.cost) == t
