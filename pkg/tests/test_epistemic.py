import copy
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiplan.core import Disposition, build_timeline, distance
from epiplan.epistemic import (
    FIND,
    GOSSIP,
    Particle,
    Stop,
    Trajectory,
    announce,
    backtrack_path,
    complete_update,
    estimate_rendezvous,
    init_particles,
    perceive_check,
    predict_trajectory,
    propagate,
    search_path,
    self_fault_update,
    task_stops,
)

from conftest import make_scenario

TOURS = ((1, 2), (3, 4), (5, 6))


def three_robot_scenario():
    tasks = [(10, 5), (20, 5), (5, 15), (5, 25), (25, 20), (25, 28)]
    home = (15, 15)
    return make_scenario(tasks, [(home, home, 5)] * 3)


def strip(p: Particle):
    return (p.subject, p.index, p.speed, tuple(p.remaining), p.position, p.end, tuple(p.traversed_path), p.active)


# ---- initialisation and propagation ------------------------------------

def test_one_particle_per_robot_and_hypothesis():
    stores = init_particles(TOURS, three_robot_scenario())
    assert len(stores) == 3
    for st_ in stores:
        assert len(st_.particles) == 9
        assert [st_.particles[(2, b)].speed for b in (1, 2, 3)] == pytest.approx([5, 4, 3])


def test_first_particle_follows_nominal_timeline():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    r = sc.robot(2)
    tl = build_timeline(r.start_depot, TOURS[1], r.end_depot, r.max_speed, sc.dt, sc.tasks)
    for k in range(1, len(tl.times) + 20):
        propagate(store, sc.dt)
        want = tl.positions[min(k, len(tl.times) - 1)]
        assert distance(store.particles[(2, 1)].position, want) <= 1e-9


def test_second_particle_reaches_first_task_at_reduced_speed():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    d = distance(sc.robot(1).start_depot, sc.task_position(1))
    ticks = 0
    while 1 in store.particles[(1, 2)].remaining_tasks:
        propagate(store, sc.dt)
        ticks += 1
    assert ticks == math.ceil(d / (0.8 * 5 * sc.dt) - 1e-9)


def test_idle_particle_at_end_depot_is_stationary():
    sc = make_scenario([], [((3, 3), (3, 3), 5)])
    store = init_particles(((),), sc)[0]
    for _ in range(5):
        propagate(store, sc.dt)
    p = store.particles[(1, 1)]
    assert p.position == (3, 3) and not p.active and p.remaining == []


def test_propagation_is_deterministic():
    sc = three_robot_scenario()
    a, b = init_particles(TOURS, sc)[1], init_particles(TOURS, sc)[1]
    for _ in range(57):
        propagate(a, sc.dt)
        propagate(b, sc.dt)
    assert a.particles == b.particles
    assert a.snapshot() == b.snapshot()


def test_propagate_reports_believed_completions():
    sc = make_scenario([(5, 0)], [((0, 0), (0, 0), 5)])
    store = init_particles(((1,),), sc)[0]
    seen = []
    for _ in range(20):
        seen += propagate(store, sc.dt)
    assert [(j, t) for j, _, t in seen] == [(1, 1)] * 3
    assert sorted(b for _, b, _ in seen) == [1, 2, 3]


# ---- announce -----------------------------------------------------------

def _advance(stores, sc, steps):
    for _ in range(steps):
        for st_ in stores:
            propagate(st_, sc.dt)


def _member_announce(stores, sc, time, tours=None):
    disp = {}
    routes = {}
    pos = {}
    for st_ in stores:
        p = st_.particles[(st_.owner, 1)]
        route = tuple(p.remaining) if tours is None else task_stops(tours[st_.owner - 1], sc)
        disp[st_.owner] = Disposition(st_.owner, p.speed, tuple(s.task_id for s in route if s.task_id))
        routes[st_.owner] = route
        pos[st_.owner] = p.position
    return announce(stores, disp, routes, pos, time)


def test_announce_makes_divergent_beliefs_identical():
    sc = three_robot_scenario()
    s1, s2, _ = init_particles(TOURS, sc)
    _advance([s1, s2], sc, 20)
    # robot 1 saw that robot 3 is not where it was believed to be
    s1.believed_false[(3, 1)] = 2.0
    s1.stamp[3] = 2.0
    complete_update(s2, 3, 5)
    _member_announce([s1, s2], sc, 2.0)
    for b in (1, 2, 3):
        assert strip(s1.particles[(3, b)]) == strip(s2.particles[(3, b)])
    assert {k: v for k, v in s1.believed_false.items() if k[0] == 3} == \
        {k: v for k, v in s2.believed_false.items() if k[0] == 3}
    assert s1.known_done == s2.known_done == {5}
    assert s1.known_dispositions == s2.known_dispositions
    assert [t.key for t in s1.pending_tasks] == [t.key for t in s2.pending_tasks] == [(GOSSIP, 3)]


def test_announce_with_unchanged_dispositions_is_idempotent():
    sc = three_robot_scenario()
    stores = init_particles(TOURS, sc)
    _advance(stores, sc, 13)
    before = [copy.deepcopy(s.particles) for s in stores]
    snaps = [s.snapshot() for s in stores]
    out = _member_announce(stores, sc, 1.3)
    assert not out.surprise
    assert [s.snapshot() for s in stores] == snaps
    for s, b in zip(stores, before):
        assert {k: strip(p) for k, p in s.particles.items()} == {k: strip(p) for k, p in b.items()}


def test_announced_reassignment_is_propagated_by_all_members():
    sc = three_robot_scenario()
    stores = init_particles(TOURS, sc)
    s1, s2, s3 = stores
    # robot 1 takes robot 3's tasks; robot 3 keeps none
    new_tours = ((1, 2, 5, 6), (3, 4), ())
    out = _member_announce(stores, sc, 0.0, tours=new_tours)
    assert out.surprise and {1, 3} <= out.surprised_about
    for st_ in stores:
        assert st_.particles[(1, 1)].remaining_tasks == [1, 2, 5, 6]
        assert st_.known_dispositions[1].assigned_tasks == (1, 2, 5, 6)
    passed = []
    for _ in range(400):
        passed += [t for j, b, t in propagate(s2, sc.dt) if (j, b) == (1, 1)]
    assert passed == [1, 2, 5, 6]


def test_announce_to_nobody_is_noop():
    out = announce([], {})
    assert not out.surprise


def test_announce_clears_flags_for_members():
    sc = three_robot_scenario()
    s1, s2, _ = init_particles(TOURS, sc)
    s1.believed_false[(2, 1)] = 0.5
    _member_announce([s1, s2], sc, 0.5)
    assert not any(j == 2 for j, _ in s1.believed_false)


# ---- perceive -----------------------------------------------------------

def test_perceive_flags_and_shifts_belief():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    _advance([store], sc, 20)
    p = store.particles[(2, 1)].position
    flags = perceive_check(p, store, {}, 1.0, time=2.0)
    assert flags == [(2, 1)]
    assert store.believed_index(2) == 2
    assert [t.key for t in store.pending_tasks] == [(GOSSIP, 2)]
    assert store.pending_tasks[0].ref == (2, 2)


def test_perceive_subject_present_is_not_flagged():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    _advance([store], sc, 10)
    p = store.particles[(2, 1)].position
    assert perceive_check(p, store, {2: p}, 1.0) == []


def test_perceive_outside_sensing_range_does_nothing():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    _advance([store], sc, 10)
    assert perceive_check((0, 0), store, {}, 1.0) == []
    assert not store.believed_false


def test_all_hypotheses_falsified_enqueues_find():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    _advance([store], sc, 2)
    # all three particles of robot 2 are still close together
    flags = perceive_check(store.particles[(2, 2)].position, store, {}, 0.6, time=0.2)
    assert flags == [(2, 1), (2, 2), (2, 3)]
    assert store.all_falsified(2)
    task = store.pending_for(2)
    assert task.kind == FIND and task.ref == (2, 3)
    # the search sweeps the route backward from the end depot
    assert task.path[0] == sc.robot(2).end_depot
    assert task.path[-1] == sc.robot(2).start_depot


# ---- self faults --------------------------------------------------------

def test_self_fault_degrade_and_full_stop():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    assert self_fault_update(store, "degrade_to_particle_2", 1.0) == 2
    assert store.tracked_empathy_index == 2 and (1, 1) in store.believed_false
    # a second degradation moves to the next hypothesis, a third exhausts them
    assert self_fault_update(store, "degrade_to_particle_2", 2.0) == 3
    assert self_fault_update(store, "degrade_to_particle_3", 3.0) is None
    other = init_particles(TOURS, sc)[1]
    assert self_fault_update(other, "full_stop", 1.0) is None
    assert {(2, 1), (2, 2), (2, 3)} <= set(other.believed_false)
    with pytest.raises(ValueError):
        self_fault_update(other, "melt")


# ---- completion ---------------------------------------------------------

def test_complete_own_task_shrinks_disposition():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    assert complete_update(store, 1, 1)
    assert store.known_dispositions[1].assigned_tasks == (2,)
    assert 1 in store.known_done


def test_complete_unknown_task_warns(caplog):
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    with caplog.at_level(logging.WARNING, logger="epiplan.epistemic"):
        assert not complete_update(store, 1, 5)
    assert "not in believed plan" in caplog.text
    assert 5 in store.known_done


def test_completing_final_task_heads_particle_home():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    complete_update(store, 2, 3)
    complete_update(store, 2, 4)
    assert store.particles[(2, 1)].remaining == []
    _advance([store], sc, 1)
    # already home, so the particle simply parks
    assert store.particles[(2, 1)].position == sc.robot(2).end_depot


# ---- rendezvous ---------------------------------------------------------

def _traj(start, velocity, dt=0.1, steps=400):
    k = np.arange(steps + 1)[:, None] * dt
    return Trajectory(0.0, dt, np.asarray(start, float) + k * np.asarray(velocity, float))


def test_rendezvous_static_target():
    t, p = estimate_rendezvous((0, 0), 5, _traj((20, 0), (0, 0)), 5)
    assert t == pytest.approx(3.0)
    assert p == pytest.approx((20, 0))


def test_rendezvous_already_in_range():
    t, _ = estimate_rendezvous((0, 0), 5, _traj((3, 0), (1, 0)), 5, start_time=0.0)
    assert t == 0.0


def test_rendezvous_head_on():
    # gap 30 m closing at 10 m/s: within 5 m after 2.5 s
    t, p = estimate_rendezvous((0, 0), 5, _traj((30, 0), (-5, 0)), 5)
    assert abs(t - 2.5) <= 0.1
    assert p[0] == pytest.approx(30 - 5 * t)


def test_rendezvous_receding_faster_is_none():
    assert estimate_rendezvous((0, 0), 5, _traj((20, 0), (10, 0)), 5) is None


@settings(max_examples=100)
@given(st.floats(6, 60), st.floats(0.5, 10), st.floats(0, 4.5))
def test_rendezvous_static_closed_form(d, v, r_c):
    t, _ = estimate_rendezvous((0, 0), v, _traj((d, 0), (0, 0), steps=2000), r_c)
    exact = (d - r_c) / v
    assert exact - 1e-9 <= t <= exact + 0.1 + 1e-9


def test_predict_trajectory_does_not_move_particle():
    sc = three_robot_scenario()
    store = init_particles(TOURS, sc)[0]
    p = store.particles[(2, 1)]
    before = strip(p)
    tr = predict_trajectory(p, 0.0, sc.dt, 3.0)
    assert strip(p) == before
    assert len(tr.positions) == 31
    assert tr.at(1.0) == pytest.approx(tuple(build_timeline(
        (15, 15), TOURS[1], (15, 15), 5, sc.dt, sc.tasks).positions[10]))


# ---- backtrack ----------------------------------------------------------

def test_backtrack_reverses_believed_path():
    a, b, c = (0, 0), (5, 0), (5, 5)
    p = Particle(1, 2, 1, 5.0, [], c, (9, 9), [a, b])
    assert backtrack_path(p) == [c, b, a]
    assert backtrack_path(Particle(1, 2, 1, 5.0, [], a, a, [])) == [a]


def test_search_path_sweeps_from_end_depot():
    a, b, c, d = (0, 0), (5, 0), (5, 5), (9, 9)
    p = Particle(1, 2, 1, 5.0, [Stop((7, 7), 4)], c, d, [a, b])
    assert search_path(p) == [d, (7, 7), c, b, a]
