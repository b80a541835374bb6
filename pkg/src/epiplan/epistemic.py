"""Belief and empathy particles plus the announce / perceive / complete updates.

Each robot keeps a :class:`BeliefStore` holding |robots| x |hypotheses|
particles. Particle ``(j, b)`` predicts where robot ``j`` is if it moves along
its last announced route at ``speed_factors[b-1]`` of its announced speed.
For ``j`` equal to the owner these are empathy particles: what teammates
expect of the owner, which the owner falls back on after a fault.
"""

from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import DEGRADE_2, DEGRADE_3, FULL_STOP, Disposition, Point, Scenario, advance, distance

log = logging.getLogger(__name__)

GOSSIP, FIND = "gossip", "find"
OK, FAILED, LOST = "ok", "failed", "lost"


@dataclass(frozen=True)
class Stop:
    """A route waypoint: an environment task, or a point visited for a gossip/find task."""

    position: Point
    task_id: int | None = None
    kind: str = "task"
    target: int | None = None


def task_stops(tour: Iterable[int], scenario: Scenario) -> tuple[Stop, ...]:
    return tuple(Stop(scenario.task_position(t), t) for t in tour)


@dataclass
class Particle:
    owner: int
    subject: int
    index: int
    speed: float
    remaining: list[Stop]
    position: Point
    end: Point
    traversed_path: list[Point] = field(default_factory=list)
    active: bool = True

    @property
    def remaining_tasks(self) -> list[int]:
        return [s.task_id for s in self.remaining if s.task_id is not None]

    def step(self, dt: float) -> list[int]:
        """Advance one tick; returns task ids passed (believed complete)."""
        if not self.active or self.speed <= 0:
            return []
        wps = itertools.chain((s.position for s in self.remaining), (self.end,))
        self.position, reached = advance(self.position, wps, self.speed * dt)
        if not reached:
            return []
        passed = self.remaining[:reached]
        done = [s.task_id for s in passed if s.task_id is not None]
        self.traversed_path.extend(s.position for s in passed)
        if reached > len(self.remaining):
            self.traversed_path.append(self.end)
            self.active = False
        del self.remaining[:reached]
        return done


@dataclass(frozen=True)
class EpistemicTask:
    kind: str
    target: int
    ref: tuple[int, int]
    estimate: Point
    time: float
    # backtrack waypoints; the route of a find task, the fallback of a gossip task
    path: tuple[Point, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.kind, self.target)


@dataclass(frozen=True)
class Trajectory:
    """Positions at times ``t0 + k*dt``."""

    t0: float
    dt: float
    positions: np.ndarray

    def at(self, t: float) -> Point:
        k = int(np.clip(math.floor((t - self.t0) / self.dt + 1e-9), 0, len(self.positions) - 1))
        return tuple(self.positions[k])

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.positions) - 1) * self.dt


@dataclass
class BeliefStore:
    owner: int
    speed_factors: tuple[float, ...]
    particles: dict[tuple[int, int], Particle]
    known_dispositions: dict[int, Disposition]
    routes: dict[int, tuple[Stop, ...]]
    ends: dict[int, Point]
    max_speeds: dict[int, float]
    tracked_empathy_index: int = 1
    # (subject, index) -> time flagged false
    believed_false: dict[tuple[int, int], float] = field(default_factory=dict)
    pending_tasks: list[EpistemicTask] = field(default_factory=list)
    known_done: set[int] = field(default_factory=set)
    # time the particles of a subject were last reset, and last modification of its record
    info_time: dict[int, float] = field(default_factory=dict)
    stamp: dict[int, float] = field(default_factory=dict)
    status: dict[int, str] = field(default_factory=dict)

    @property
    def subjects(self) -> list[int]:
        return sorted(self.known_dispositions)

    @property
    def n_hypotheses(self) -> int:
        return len(self.speed_factors)

    def believed_index(self, j: int) -> int | None:
        """Lowest hypothesis index for ``j`` not flagged false."""
        for b in range(1, self.n_hypotheses + 1):
            if (j, b) not in self.believed_false:
                return b
        return None

    def believed_particle(self, j: int) -> Particle | None:
        b = self.believed_index(j)
        return None if b is None else self.particles[(j, b)]

    def believed_remaining(self, j: int) -> list[int]:
        if self.status.get(j) in (FAILED, LOST) or self.believed_index(j) is None:
            return []
        return [t for t in self.believed_particle(j).remaining_tasks if t not in self.known_done]

    def outstanding(self, j: int) -> set[int]:
        """Tasks ``j`` may still hold: those ahead of any unflagged hypothesis, or all
        of its last announced tasks not known done once no hypothesis is left."""
        if self.believed_index(j) is None or self.status.get(j) in (FAILED, LOST):
            return set(self.known_dispositions[j].assigned_tasks) - self.known_done
        out = set()
        for b in range(1, self.n_hypotheses + 1):
            if (j, b) not in self.believed_false:
                out.update(self.particles[(j, b)].remaining_tasks)
        return out - self.known_done

    def all_falsified(self, j: int) -> bool:
        return self.believed_index(j) is None

    def pending_for(self, j: int) -> EpistemicTask | None:
        for task in self.pending_tasks:
            if task.target == j:
                return task
        return None

    def snapshot(self) -> dict:
        """Particle positions and flags, for trace export."""
        return {
            "tracked": self.tracked_empathy_index,
            "particles": {f"{j},{b}": [round(p.position[0], 6), round(p.position[1], 6)]
                          for (j, b), p in sorted(self.particles.items())},
            "false": sorted(f"{j},{b}" for j, b in self.believed_false),
            "pending": [f"{t.kind}:{t.target}" for t in self.pending_tasks],
        }


def _reset_particles(store: BeliefStore, j: int, position: Point, route: Sequence[Stop], capability: float):
    for b, f in enumerate(store.speed_factors, start=1):
        store.particles[(j, b)] = Particle(
            owner=store.owner, subject=j, index=b, speed=capability * f, remaining=list(route),
            position=tuple(position), end=store.ends[j], traversed_path=[tuple(position)],
            active=capability > 0,
        )


def init_particles(tours: Sequence[Sequence[int]], scenario: Scenario,
                   speed_factors: Sequence[float] | None = None) -> list[BeliefStore]:
    """One store per robot; every store starts from the centralized plan."""
    factors = tuple(speed_factors or scenario.speed_factors)
    stores = []
    for robot in scenario.robots:
        st = BeliefStore(
            owner=robot.id, speed_factors=factors, particles={}, known_dispositions={}, routes={},
            ends={r.id: r.end_depot for r in scenario.robots},
            max_speeds={r.id: r.max_speed for r in scenario.robots},
        )
        for r in scenario.robots:
            tour = tuple(tours[r.id - 1])
            route = task_stops(tour, scenario)
            st.known_dispositions[r.id] = Disposition(r.id, r.max_speed, tour)
            st.routes[r.id] = route
            st.info_time[r.id] = st.stamp[r.id] = 0.0
            st.status[r.id] = OK
            _reset_particles(st, r.id, r.start_depot, route, r.max_speed)
        stores.append(st)
    return stores


def propagate(store: BeliefStore, dt: float) -> list[tuple[int, int, int]]:
    """Advance every particle; returns (subject, index, task) believed completions."""
    out = []
    for (j, b), p in store.particles.items():
        for t in p.step(dt):
            out.append((j, b, t))
    return out


def complete_update(store: BeliefStore, robot_id: int, task_id: int) -> bool:
    """Record that ``robot_id`` completed ``task_id``.

    The owner's own empathy particles are left untouched: they mirror what
    teammates believe, and teammates have not been told yet.
    """
    disp = store.known_dispositions.get(robot_id)
    if disp is None or task_id not in disp.assigned_tasks:
        if task_id not in store.known_done:
            log.warning("robot %d: completion of task %d by %s not in believed plan", store.owner, task_id, robot_id)
        store.known_done.add(task_id)
        return False
    store.known_done.add(task_id)
    store.known_dispositions[robot_id] = Disposition(
        robot_id, disp.capability, tuple(t for t in disp.assigned_tasks if t != task_id))
    store.routes[robot_id] = tuple(s for s in store.routes[robot_id] if s.task_id != task_id)
    if robot_id != store.owner:
        for b in range(1, store.n_hypotheses + 1):
            p = store.particles[(robot_id, b)]
            p.remaining = [s for s in p.remaining if s.task_id != task_id]
    return True


def self_fault_update(store: BeliefStore, kind: str, time: float = 0.0) -> int | None:
    """Apply a robot's own fault to its store.

    Returns the empathy index the robot now tracks, or ``None`` when it can no
    longer move (full stop, or degraded past the last hypothesis).
    """
    i = store.owner
    B = store.n_hypotheses
    if kind == FULL_STOP:
        target = B + 1
    elif kind in (DEGRADE_2, DEGRADE_3):
        target = max(2 if kind == DEGRADE_2 else 3, store.tracked_empathy_index + 1)
    else:
        raise ValueError(f"unknown fault kind {kind!r}")
    for b in range(1, min(target, B + 1)):
        store.believed_false.setdefault((i, b), time)
    if target > B:
        store.tracked_empathy_index = B
        return None
    store.tracked_empathy_index = target
    return target


def backtrack_path(particle: Particle) -> list[Point]:
    """The particle's believed path, reversed from its current position to its anchor."""
    pts = [*particle.traversed_path, particle.position]
    out: list[Point] = []
    for p in reversed(pts):
        if not out or distance(out[-1], p) > 1e-9:
            out.append(tuple(p))
    return out


def search_path(particle: Particle) -> list[Point]:
    """Reverse sweep of the whole believed route: end depot, stops ahead, then the backtrack.

    A subject that is merely late lies somewhere on this sweep, including one
    that already made it home.
    """
    ahead = [particle.end, *(s.position for s in reversed(particle.remaining))]
    out: list[Point] = []
    for p in [*ahead, *backtrack_path(particle)]:
        if not out or distance(out[-1], p) > 1e-9:
            out.append(tuple(p))
    return out


def predict_trajectory(particle: Particle, t0: float, dt: float, horizon: float) -> Trajectory:
    """Future positions of a particle for ``horizon`` seconds (parked at the end)."""
    p = copy.deepcopy(particle)
    steps = max(int(math.ceil(horizon / dt)), 0)
    pos = np.empty((steps + 1, 2))
    pos[0] = p.position
    for k in range(1, steps + 1):
        if p.active and p.speed > 0:
            p.step(dt)
        pos[k] = p.position
    return Trajectory(t0, dt, pos)


def estimate_rendezvous(owner_position: Point, owner_speed: float, trajectory: Trajectory, r_c: float,
                        start_time: float | None = None) -> tuple[float, Point] | None:
    """Earliest grid time the owner can be within ``r_c`` of the predicted particle.

    Reachability test: distance from the owner's start to the particle minus
    the reachable radius ``owner_speed * (t - start)`` is at most ``r_c``.
    """
    start = trajectory.t0 if start_time is None else max(start_time, trajectory.t0)
    k0 = max(int(math.ceil((start - trajectory.t0) / trajectory.dt - 1e-9)), 0)
    pos = trajectory.positions[k0:]
    if not len(pos):
        return None
    times = trajectory.t0 + (k0 + np.arange(len(pos))) * trajectory.dt
    gap = np.hypot(pos[:, 0] - owner_position[0], pos[:, 1] - owner_position[1]) - owner_speed * (times - start)
    hit = np.flatnonzero(gap <= r_c + 1e-9)
    if not len(hit):
        return None
    k = int(hit[0])
    return float(times[k]), (float(pos[k, 0]), float(pos[k, 1]))


def _enqueue(store: BeliefStore, task: EpistemicTask) -> None:
    store.pending_tasks = [t for t in store.pending_tasks if t.target != task.target] + [task]


def refresh_epistemic_tasks(store: BeliefStore, time: float) -> list[EpistemicTask]:
    """Create gossip/find tasks implied by the current flags; returns new ones."""
    new = []
    for j in store.subjects:
        if j == store.owner or store.status.get(j) in (FAILED, LOST):
            continue
        b = store.believed_index(j)
        cur = store.pending_for(j)
        if b is None:
            if cur is None or cur.kind != FIND:
                # sweep the slowest hypothesis's route backward from its end
                last = store.particles[(j, store.n_hypotheses)]
                path = tuple(search_path(last))
                task = EpistemicTask(FIND, j, (j, store.n_hypotheses), path[0], time, path)
                _enqueue(store, task)
                new.append(task)
        elif b > 1 and (cur is None or cur.ref != (j, b)):
            p = store.particles[(j, b)]
            task = EpistemicTask(GOSSIP, j, (j, b), p.position, time, tuple(backtrack_path(p)))
            _enqueue(store, task)
            new.append(task)
    return new


def perceive_check(owner_position: Point, store: BeliefStore, sensed: Mapping[int, Point], r_s: float,
                   time: float = 0.0) -> list[tuple[int, int]]:
    """Flag believed particles that are in view while their robot is not there.

    ``sensed`` maps robot id to true position for robots within ``r_s`` of the
    owner. After a flag the belief shifts to the next hypothesis; a gossip task
    is queued to check it, or a find task once every hypothesis is false.
    """
    flagged = []
    for j in store.subjects:
        if j == store.owner or store.status.get(j) in (FAILED, LOST):
            continue
        while True:
            b = store.believed_index(j)
            if b is None:
                break
            p = store.particles[(j, b)].position
            if distance(owner_position, p) > r_s:
                break
            seen = sensed.get(j)
            if seen is not None and distance(seen, p) <= r_s:
                break
            store.believed_false[(j, b)] = time
            flagged.append((j, b))
    if flagged:
        store.stamp.update({j: time for j, _ in flagged})
        refresh_epistemic_tasks(store, time)
    return flagged


def _confirms(store: BeliefStore, j: int, position: Point, route: Sequence[Stop], capability: float) -> bool:
    if any(k == j for k, _ in store.believed_false):
        return False
    p = store.particles[(j, 1)]
    return (distance(p.position, position) <= 1e-9 and abs(p.speed - capability) <= 1e-12
            and p.active == (capability > 0) and tuple(p.remaining) == tuple(route))


@dataclass
class AnnounceOutcome:
    surprise: bool = False
    surprised_about: set[int] = field(default_factory=set)


def _belief_summary(store: BeliefStore, j: int):
    b = store.believed_index(j)
    if b is None:
        return (store.status.get(j), None)
    p = store.particles[(j, b)]
    return (store.status.get(j), round(p.speed, 9), tuple(p.remaining_tasks))


def announce(stores: Sequence[BeliefStore], dispositions: Mapping[int, Disposition],
             routes: Mapping[int, Sequence[Stop]] | None = None,
             positions: Mapping[int, Point] | None = None, time: float = 0.0) -> AnnounceOutcome:
    """Share dispositions and beliefs within a connected set.

    ``dispositions``/``routes``/``positions`` describe the members themselves.
    Members' particles are reset to what they announced; knowledge about
    absent robots is merged by taking the freshest record plus every flag
    raised since that record was made. Afterwards all stores agree.
    """
    out = AnnounceOutcome()
    if not stores:
        return out
    by_owner = {st.owner: st for st in stores}
    routes = routes or {}
    positions = positions or {}
    before = {st.owner: {j: (_belief_summary(st, j), frozenset(b for (k, b) in st.believed_false if k == j))
                         for j in st.subjects} for st in stores}

    subjects = stores[0].subjects
    for k in subjects:
        if k in dispositions:
            continue
        src = max(stores, key=lambda st: (st.stamp.get(k, -1.0), -st.owner))
        anchor = src.info_time.get(k, 0.0)
        flags: dict[int, float] = {}
        for st in stores:
            for (j, b), t in st.believed_false.items():
                if j == k and t >= anchor:
                    flags[b] = min(t, flags.get(b, t))
        stamp = max(src.stamp.get(k, 0.0), max(flags.values(), default=0.0))
        for st in stores:
            if st is not src:
                for b in range(1, st.n_hypotheses + 1):
                    st.particles[(k, b)] = copy.deepcopy(src.particles[(k, b)])
                    st.particles[(k, b)].owner = st.owner
                st.known_dispositions[k] = src.known_dispositions[k]
                st.routes[k] = src.routes[k]
                st.info_time[k] = anchor
                st.status[k] = src.status[k]
            for key in [key for key in st.believed_false if key[0] == k]:
                del st.believed_false[key]
            st.believed_false.update({(k, b): t for b, t in flags.items()})
            st.stamp[k] = stamp

    for j, disp in dispositions.items():
        route = tuple(routes.get(j, ()))
        if not route and disp.assigned_tasks:
            route = tuple(s for s in stores[0].routes[j] if s.task_id in disp.assigned_tasks)
        pos = positions.get(j, by_owner[j].particles[(j, 1)].position if j in by_owner else (0.0, 0.0))
        # a belief the announcement confirms is kept, with its older anchor, so that
        # hypotheses stay aligned with teammates outside this set
        agree = [st for st in stores if _confirms(st, j, pos, route, disp.capability)]
        src = min(agree, key=lambda st: (st.info_time[j], st.owner)) if agree else None
        for st in stores:
            st.known_dispositions[j] = disp
            st.routes[j] = route
            st.stamp[j] = time
            st.status[j] = FAILED if disp.capability <= 0 else OK
            for key in [key for key in st.believed_false if key[0] == j]:
                del st.believed_false[key]
            if src is None:
                _reset_particles(st, j, pos, route, disp.capability)
                st.info_time[j] = time
                if j == st.owner:
                    st.tracked_empathy_index = 1
            elif st is not src:
                for b in range(1, st.n_hypotheses + 1):
                    st.particles[(j, b)] = copy.deepcopy(src.particles[(j, b)])
                    st.particles[(j, b)].owner = st.owner
                st.info_time[j] = src.info_time[j]

    done = set().union(*(st.known_done for st in stores))
    pending: dict[int, EpistemicTask] = {}
    for st in sorted(stores, key=lambda s: s.owner):
        for task in st.pending_tasks:
            if task.target in dispositions:
                continue
            cur = pending.get(task.target)
            if cur is None or (task.kind == FIND and cur.kind != FIND) or (task.kind == cur.kind and task.time > cur.time):
                pending[task.target] = task
    for st in stores:
        st.known_done = set(done)
        st.pending_tasks = [pending[k] for k in sorted(pending)]
        refresh_epistemic_tasks(st, time)

    for st in stores:
        for j in st.subjects:
            now = (_belief_summary(st, j), frozenset(b for (k, b) in st.believed_false if k == j))
            if now != before[st.owner].get(j):
                out.surprise = True
                out.surprised_about.add(j)
    return out
