import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest

from epiplan.epistemic import FIND, GOSSIP, EpistemicTask, Trajectory
from epiplan.replanner import (
    CostModel,
    MctsParams,
    ReplanItem,
    RobotState,
    SearchNode,
    exhaustive_budget,
    mcts_plan,
    partition_tasks,
    simulate_rollout,
    uct_select,
)


def env_items(ids):
    return [ReplanItem.task(i) for i in ids]


def brute_force(robot, items, cost):
    return min(cost.tour_cost(robot, list(p)) for p in itertools.permutations(items))


def random_instance(rng, k):
    pos = {i + 1: tuple(rng.uniform(0, 30, 2)) for i in range(k)}
    home = tuple(rng.uniform(0, 30, 2))
    return RobotState(1, home, 5.0, 0.0, home), env_items(pos), CostModel(pos, 5.0, 0.1)


# ---- partition ----------------------------------------------------------

def test_partition_two_robots_two_tasks():
    cost = CostModel({1: (1, 0), 2: (9, 0)}, 5, 0.1)
    robots = [RobotState(1, (0, 0), 5, 0, (0, 0)), RobotState(2, (10, 0), 5, 0, (10, 0))]
    out = partition_tasks(robots, env_items([1, 2]), cost)
    assert out == {1: env_items([1]), 2: env_items([2])}


def test_partition_single_robot_gets_everything():
    cost = CostModel({1: (1, 0), 2: (9, 0), 3: (4, 4)}, 5, 0.1)
    out = partition_tasks([RobotState(1, (0, 0), 5)], env_items([3, 1, 2]), cost)
    assert out == {1: env_items([1, 2, 3])}


def test_partition_empty_items():
    cost = CostModel({}, 5, 0.1)
    assert partition_tasks([RobotState(1, (0, 0), 5)], [], cost) == {1: []}


def test_partition_find_goes_to_nearby_robot():
    lost = EpistemicTask(FIND, 3, (3, 3), (28, 28), 1.0, ((28, 28), (25, 25)))
    cost = CostModel({}, 5, 0.1)
    robots = [RobotState(1, (0, 0), 5, 1.0, (0, 0)), RobotState(2, (26, 27), 5, 1.0, (26, 27))]
    out = partition_tasks(robots, [ReplanItem.epistemic(lost)], cost)
    assert out[2] == [ReplanItem.epistemic(lost)] and out[1] == []


def test_partition_ties_go_to_lowest_id():
    cost = CostModel({1: (5, 0)}, 5, 0.1)
    robots = [RobotState(2, (10, 0), 5), RobotState(1, (0, 0), 5)]
    assert partition_tasks(robots, env_items([1]), cost)[1] == env_items([1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 9), st.integers(0, 3), st.integers(0, 2**31))
def test_partition_is_complete_and_disjoint(m, n_env, n_epi, seed):
    rng = np.random.default_rng(seed)
    pos = {i + 1: tuple(rng.uniform(0, 30, 2)) for i in range(n_env)}
    epi = [ReplanItem.epistemic(EpistemicTask(GOSSIP if k % 2 else FIND, 10 + k, (10 + k, 1),
                                              tuple(rng.uniform(0, 30, 2)), 0.0)) for k in range(n_epi)]
    items = env_items(pos) + epi
    robots = [RobotState(r + 1, tuple(rng.uniform(0, 30, 2)), float(rng.uniform(1, 6))) for r in range(m)]
    cost = CostModel(pos, 5, 0.1)
    out = partition_tasks(robots, items, cost)
    flat = [it for r in sorted(out) for it in out[r]]
    assert sorted(flat, key=lambda it: it.sort_key) == sorted(items, key=lambda it: it.sort_key)
    assert len(flat) == len(set(flat))
    assert out == partition_tasks(list(reversed(robots)), list(reversed(items)), cost)


# ---- UCT ----------------------------------------------------------------

def _node_with(children):
    root = SearchNode((), [])
    for k, (mean, n) in enumerate(children):
        root.children.append(SearchNode((k,), [], root, visits=n, total=mean * n))
    root.visits = sum(n for _, n in children)
    return root


def test_uct_without_exploration_picks_best_mean():
    root = _node_with([(-5, 3), (-2, 1), (-4, 8)])
    assert uct_select(root, 0.0) is root.children[1]


def test_uct_prefers_less_visited_at_equal_mean():
    root = _node_with([(-3, 9), (-3, 2)])
    assert uct_select(root, 1.0) is root.children[1]


def test_uct_hand_computed_scores():
    root = _node_with([(-5, 5), (-6, 2)])
    root.visits = 10
    s1 = -5 + math.sqrt(math.log(10) / 5)
    s2 = -6 + math.sqrt(math.log(10) / 2)
    assert s1 == pytest.approx(-4.322, abs=1e-3) and s2 == pytest.approx(-4.927, abs=1e-3)
    assert uct_select(root, 1.0) is root.children[0]


def test_uct_unvisited_children_first_in_order():
    root = _node_with([(-1, 4), (0, 0), (0, 0)])
    assert uct_select(root, 1.0) is root.children[1]


def test_uct_on_leaf_raises():
    with pytest.raises(ValueError):
        uct_select(SearchNode((), []), 1.0)


# ---- rollout ------------------------------------------------------------

def test_rollout_single_task():
    cost = CostModel({1: (10, 0)}, 5, 0.1, return_to_depot=False)
    r = simulate_rollout(env_items([1]), [], RobotState(1, (0, 0), 5), cost, np.random.default_rng(0))
    assert r == pytest.approx(-2)


def test_rollout_task_then_gossip_intercept():
    # task reached at t=2 from (0,0); static target at (20,0) is in range (r_c=5) one second later
    traj = Trajectory(0.0, 0.1, np.tile([20.0, 0.0], (101, 1)))
    g = EpistemicTask(GOSSIP, 2, (2, 1), (20, 0), 0.0, ((20, 0),))
    cost = CostModel({1: (10, 0)}, 5, 0.1, {(2, 1): traj}, return_to_depot=False)
    r = simulate_rollout(env_items([1]), [ReplanItem.epistemic(g)], RobotState(1, (0, 0), 5), cost,
                         np.random.default_rng(0))
    assert r == pytest.approx(-3.0, abs=0.1 + 1e-9)


def test_rollout_unreachable_gossip_falls_back_to_backtrack():
    # target recedes faster than the robot can move
    traj = Trajectory(0.0, 0.1, np.array([[20 + 10 * 0.1 * k, 0.0] for k in range(201)]))
    g = EpistemicTask(GOSSIP, 2, (2, 1), (20, 0), 0.0, ((20, 0), (10, 0)))
    cost = CostModel({}, 5, 0.1, {(2, 1): traj}, return_to_depot=False)
    assert cost.tour_cost(RobotState(1, (0, 0), 5), [ReplanItem.epistemic(g)]) == pytest.approx(30 / 5)


def test_rollout_with_nothing_remaining_uses_partial_cost():
    cost = CostModel({1: (10, 0), 2: (10, 10)}, 5, 0.1)
    robot = RobotState(1, (0, 0), 5, 0, (0, 0))
    r = simulate_rollout(env_items([1, 2]), [], robot, cost, np.random.default_rng(1))
    assert r == pytest.approx(-cost.tour_cost(robot, env_items([1, 2])))
    assert r == pytest.approx(-(10 + 10 + math.hypot(10, 10)) / 5)


# ---- MCTS ---------------------------------------------------------------

def test_mcts_zero_and_one_item():
    cost = CostModel({1: (1, 1)}, 5, 0.1)
    robot = RobotState(1, (0, 0), 5)
    assert mcts_plan(robot, [], cost) == []
    assert mcts_plan(robot, env_items([1]), cost) == env_items([1])


def test_mcts_orders_two_tasks():
    cost = CostModel({1: (2, 0), 2: (10, 0)}, 5, 0.1, return_to_depot=False)
    robot = RobotState(1, (0, 0), 5)
    for order in ([1, 2], [2, 1]):
        assert mcts_plan(robot, env_items(order), cost, MctsParams(budget=50)) == env_items([1, 2])


def test_mcts_is_deterministic_given_seed():
    robot, items, cost = random_instance(np.random.default_rng(3), 6)
    p = MctsParams(budget=300, seed=11)
    assert mcts_plan(robot, items, cost, p) == mcts_plan(robot, items, cost, p)


@pytest.mark.parametrize("selection", ["best", "robust"])
def test_mcts_exhaustive_on_small_instances(selection):
    rng = np.random.default_rng(5)
    for k in (2, 3, 4):
        for _ in range(5):
            robot, items, cost = random_instance(rng, k)
            p = MctsParams(budget=exhaustive_budget(k), c=0.0, final_selection=selection)
            got = cost.tour_cost(robot, mcts_plan(robot, items, cost, p))
            if selection == "best":
                assert got == pytest.approx(brute_force(robot, items, cost))
            else:
                assert got >= brute_force(robot, items, cost) - 1e-9


def test_mcts_beats_random_tours():
    rng = np.random.default_rng(2024)
    wins = 0
    for seed in range(100):
        robot, items, cost = random_instance(rng, 6)
        tree = cost.tour_cost(robot, mcts_plan(robot, items, cost, MctsParams(budget=1000, seed=seed)))
        rand = cost.tour_cost(robot, [items[k] for k in rng.permutation(len(items))])
        wins += tree < rand
    assert binomtest(wins, 100, 0.5, alternative="greater").pvalue < 0.01


def test_mcts_params_validation():
    with pytest.raises(ValueError):
        MctsParams(budget=0)
    with pytest.raises(ValueError):
        MctsParams(c=-1)
    with pytest.raises(ValueError):
        MctsParams(final_selection="most")
    with pytest.raises(ValueError):
        ReplanItem("chore", 1)


def test_exhaustive_budget_counts_tree_nodes():
    assert exhaustive_budget(1) == 1
    assert exhaustive_budget(3) == 3 + 6 + 6
