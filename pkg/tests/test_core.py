import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiplan import io
from epiplan.core import (
    Bounds,
    FaultEvent,
    InvalidScenarioError,
    Task,
    build_timeline,
    distance,
    integrate_motion,
    within_range,
)

from conftest import make_scenario

coord = st.floats(-100, 100, allow_nan=False)
point = st.tuples(coord, coord)


# ---- integrate_motion ---------------------------------------------------

def test_integrate_motion_straight_step():
    assert integrate_motion((0, 0), (10, 0), 5, 1) == pytest.approx((5, 0))


def test_integrate_motion_clamps_at_waypoint():
    assert integrate_motion((0, 0), (1, 0), 5, 1) == (1, 0)


def test_integrate_motion_unit_vector_scaling():
    assert integrate_motion((0, 0), (3, 4), 5, 0.5) == pytest.approx((1.5, 2.0))


def test_integrate_motion_zero_speed_returns_input():
    assert integrate_motion((2, 3), (10, 0), 0, 1) == (2, 3)


@given(point, point, st.floats(0, 20), st.floats(0.01, 2))
def test_integrate_motion_never_overshoots(p, w, v, dt):
    q = integrate_motion(p, w, v, dt)
    assert distance(p, q) <= v * dt + 1e-7
    assert distance(q, w) <= distance(p, w) + 1e-7


@given(point, point, st.floats(0.1, 20), st.floats(0.01, 2))
def test_integrate_motion_idempotent_at_waypoint(p, w, v, dt):
    q = p
    for _ in range(int(distance(p, w) / (v * dt)) + 2):
        q = integrate_motion(q, w, v, dt)
    assert q == (float(w[0]), float(w[1]))
    assert integrate_motion(q, w, v, dt) == q


# ---- within_range -------------------------------------------------------

def test_within_range_boundary_inclusive():
    assert within_range((0, 0), (3, 4), 5)
    assert not within_range((0, 0), (3, 4), 4.9)
    assert within_range((1, 1), (1, 1), 0)


@given(point, point, st.floats(0, 300))
def test_within_range_symmetric(a, b, r):
    assert within_range(a, b, r) == within_range(b, a, r)


# ---- build_timeline -----------------------------------------------------

def test_timeline_straight_run():
    assert build_timeline((0, 0), [], (10, 0), 5, 1, []).total_duration == 2


def test_timeline_through_one_task():
    tl = build_timeline((0, 0), [1], (10, 10), 5, 1, [Task(1, (0, 10))])
    assert tl.total_duration == 4
    assert tl.task_times == (2,)


def test_timeline_degenerate():
    tl = build_timeline((3, 3), [], (3, 3), 5, 0.1, [])
    assert tl.total_duration == 0
    assert len(tl.samples) == 1


def test_timeline_unknown_task():
    with pytest.raises(InvalidScenarioError):
        build_timeline((0, 0), [2], (0, 0), 5, 0.1, [Task(1, (1, 1))])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 30), st.floats(0, 30)), max_size=6), point,
       st.floats(0.5, 8), st.sampled_from([0.05, 0.1, 0.25]))
def test_timeline_properties(pts, start, speed, dt):
    start = (abs(start[0]) % 30, abs(start[1]) % 30)
    tasks = [Task(k + 1, p) for k, p in enumerate(pts)]
    tl = build_timeline(start, list(range(1, len(pts) + 1)), (15, 15), speed, dt, tasks)
    route = [start, *pts, (15, 15)]
    seg = sum(distance(route[k], route[k + 1]) for k in range(len(route) - 1))
    assert tl.path_length == pytest.approx(seg)
    assert tl.total_duration * speed >= tl.path_length - 1e-9
    assert tl.path_length >= tl.total_duration * speed - speed * dt - 1e-9
    steps = np.hypot(*np.diff(tl.positions, axis=0).T)
    assert np.all(steps <= speed * dt + 1e-9)
    assert np.allclose(np.diff(tl.times), dt)
    assert tuple(tl.positions[-1]) == pytest.approx((15, 15))
    assert np.all(np.diff(tl.completed) >= 0)
    assert tl.completed[-1] == len(pts)


# ---- scenario validation and serialization ------------------------------

def test_scenario_validation_errors():
    ok_robot = [((0, 0), (0, 0), 5)]
    with pytest.raises(InvalidScenarioError) as e:
        make_scenario([(40, 1)], ok_robot)
    assert e.value.path == "tasks[0].position"
    with pytest.raises(InvalidScenarioError):
        make_scenario([], [((0, 0), (0, 0), 0)])
    with pytest.raises(InvalidScenarioError):
        make_scenario([], ok_robot, r_c=0)
    with pytest.raises(InvalidScenarioError):
        make_scenario([], ok_robot, faults=[FaultEvent(2, 1.0, "full_stop")])
    with pytest.raises(InvalidScenarioError):
        make_scenario([], ok_robot, faults=[FaultEvent(1, -1.0, "full_stop")])
    with pytest.raises(InvalidScenarioError):
        make_scenario([], [((0, 0), (0, 0), 5)] * 2,
                      faults=[FaultEvent(1, 1.0, "full_stop"), FaultEvent(1, 2.0, "full_stop")])


def test_sensing_range_defaults_to_comm_range():
    sc = make_scenario([], [((0, 0), (0, 0), 5)], r_c=7)
    assert sc.r_s == 7


def test_scenario_json_round_trip(tmp_path):
    sc = make_scenario([(1, 2), (3, 4.5)], [((0, 0), (1, 1), 5), ((2, 2), (2, 2), 4)],
                       faults=[FaultEvent(2, 1.5, "degrade_to_particle_2")], seed=2**63 + 5)
    path = tmp_path / "s.json"
    io.save_scenario(sc, path)
    assert io.load_scenario(path) == sc


def test_scenario_schema_reports_field_path():
    doc = io.scenario_to_dict(make_scenario([(1, 1)], [((0, 0), (0, 0), 5)]))
    doc["robots"][0]["max_speed"] = -1
    with pytest.raises(InvalidScenarioError) as e:
        io.scenario_from_dict(json.loads(json.dumps(doc)))
    assert e.value.path == "robots[0].max_speed"
    doc["robots"][0]["max_speed"] = 5
    doc["faults"] = [{"robot_id": 1, "time": 0, "kind": "explode"}]
    with pytest.raises(InvalidScenarioError) as e:
        io.scenario_from_dict(doc)
    assert e.value.path == "faults[0].kind"


def test_bounds_diagonal():
    assert Bounds(0, 0, 3, 4).diagonal == pytest.approx(5)
    assert math.isclose(Bounds(0, 0, 30, 30).diagonal, 30 * math.sqrt(2))
