"""Domain model, constant-speed kinematics, timelines and range predicates.

Everything here is plain value data plus pure functions, so planner,
epistemic layer and simulator share one notion of motion and time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]

FULL_STOP = "full_stop"
DEGRADE_2 = "degrade_to_particle_2"
DEGRADE_3 = "degrade_to_particle_3"
FAULT_KINDS = (DEGRADE_2, DEGRADE_3, FULL_STOP)

DEFAULT_DT = 0.1
DEFAULT_SPEED_FACTORS = (1.0, 0.8, 0.6)

# Snap tolerance when a step lands (numerically) on a waypoint.
SNAP_EPS = 1e-9


class EpiplanError(Exception):
    """Base class for errors raised by this package."""


class InvalidScenarioError(EpiplanError, ValueError):
    """Scenario content violates a structural invariant.

    ``path`` names the offending field (e.g. ``tasks[3].position``).
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


@dataclass(frozen=True)
class Task:
    id: int
    position: Point


@dataclass(frozen=True)
class RobotSpec:
    id: int
    start_depot: Point
    end_depot: Point
    max_speed: float


@dataclass(frozen=True)
class Disposition:
    """Capability (effective speed) plus the ordered task list of a robot."""

    robot_id: int
    capability: float
    assigned_tasks: tuple[int, ...] = ()


@dataclass(frozen=True)
class FaultEvent:
    robot_id: int
    time: float
    kind: str


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p: Sequence[float]) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    @property
    def diagonal(self) -> float:
        return math.hypot(self.xmax - self.xmin, self.ymax - self.ymin)


@dataclass(frozen=True)
class Scenario:
    bounds: Bounds
    tasks: tuple[Task, ...]
    robots: tuple[RobotSpec, ...]
    r_c: float = 5.0
    r_s: float | None = None
    dt: float = DEFAULT_DT
    faults: tuple[FaultEvent, ...] = ()
    seed: int = 0
    speed_factors: tuple[float, ...] = DEFAULT_SPEED_FACTORS
    allow_multiple_faults: bool = False

    def __post_init__(self):
        # sensing range defaults to the communication range
        if self.r_s is None:
            object.__setattr__(self, "r_s", self.r_c)

    @property
    def n(self) -> int:
        return len(self.tasks)

    @property
    def m(self) -> int:
        return len(self.robots)

    def task_position(self, task_id: int) -> Point:
        try:
            return self.tasks[task_id - 1].position
        except IndexError:
            raise InvalidScenarioError(f"unknown task id {task_id}", "tasks") from None

    def robot(self, robot_id: int) -> RobotSpec:
        return self.robots[robot_id - 1]

    @property
    def max_speed(self) -> float:
        return max((r.max_speed for r in self.robots), default=0.0)

    def with_faults(self, faults: Iterable[FaultEvent]) -> "Scenario":
        from dataclasses import replace

        return replace(self, faults=tuple(faults))

    def validate(self) -> "Scenario":
        for k, t in enumerate(self.tasks):
            if t.id != k + 1:
                raise InvalidScenarioError("task ids must be contiguous 1..n", f"tasks[{k}].id")
            if not self.bounds.contains(t.position):
                raise InvalidScenarioError("outside environment bounds", f"tasks[{k}].position")
        if not self.robots:
            raise InvalidScenarioError("at least one robot is required", "robots")
        for k, r in enumerate(self.robots):
            if r.id != k + 1:
                raise InvalidScenarioError("robot ids must be contiguous 1..m", f"robots[{k}].id")
            if not r.max_speed > 0:
                raise InvalidScenarioError("must be > 0", f"robots[{k}].max_speed")
            for name in ("start_depot", "end_depot"):
                if not self.bounds.contains(getattr(r, name)):
                    raise InvalidScenarioError("outside environment bounds", f"robots[{k}].{name}")
        if not self.r_c > 0:
            raise InvalidScenarioError("must be > 0", "r_c")
        if not self.r_s >= 0:
            raise InvalidScenarioError("must be >= 0", "r_s")
        if not self.dt > 0:
            raise InvalidScenarioError("must be > 0", "dt")
        if not self.speed_factors or self.speed_factors[0] != 1.0:
            raise InvalidScenarioError("first speed factor must be 1.0", "speed_factors")
        if any(not 0 < f <= 1 for f in self.speed_factors):
            raise InvalidScenarioError("factors must lie in (0, 1]", "speed_factors")
        seen = set()
        for k, f in enumerate(self.faults):
            if f.time < 0:
                raise InvalidScenarioError("must be >= 0", f"faults[{k}].time")
            if not 1 <= f.robot_id <= self.m:
                raise InvalidScenarioError("unknown robot id", f"faults[{k}].robot_id")
            if f.kind not in FAULT_KINDS:
                raise InvalidScenarioError(f"must be one of {FAULT_KINDS}", f"faults[{k}].kind")
            if f.robot_id in seen and not self.allow_multiple_faults:
                raise InvalidScenarioError("at most one fault per robot", f"faults[{k}].robot_id")
            seen.add(f.robot_id)
        return self


@dataclass(frozen=True)
class Timeline:
    """A robot tour sampled on the global dt grid.

    ``positions[k]`` is the position at ``times[k] = k * dt`` and
    ``completed[k]`` the number of tour tasks finished by then.
    """

    robot_id: int
    times: np.ndarray
    positions: np.ndarray
    completed: np.ndarray
    total_duration: float
    path_length: float
    task_times: tuple[float, ...] = field(default=())

    @property
    def samples(self):
        return list(zip(self.times.tolist(), map(tuple, self.positions.tolist()), self.completed.tolist()))

    def position_at(self, t: float) -> Point:
        if len(self.times) == 1:
            return tuple(self.positions[0])
        dt = self.times[1] - self.times[0]
        k = min(int(round(t / dt)), len(self.times) - 1)
        return tuple(self.positions[max(k, 0)])


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def within_range(a: Sequence[float], b: Sequence[float], rng: float) -> bool:
    """True iff the Euclidean distance between ``a`` and ``b`` is at most ``rng``."""
    return distance(a, b) <= rng


def integrate_motion(position: Point, waypoint: Point, speed: float, dt: float) -> Point:
    """One straight-line step toward ``waypoint``; never overshoots."""
    if speed <= 0:
        return position
    step = speed * dt
    d = distance(position, waypoint)
    if d <= step + SNAP_EPS:
        return (float(waypoint[0]), float(waypoint[1]))
    f = step / d
    return (position[0] + (waypoint[0] - position[0]) * f, position[1] + (waypoint[1] - position[1]) * f)


def advance(position: Point, waypoints: Sequence[Point], budget: float) -> tuple[Point, int]:
    """Travel ``budget`` meters along ``waypoints`` starting at ``position``.

    Leftover distance carries over past each reached waypoint. Returns the new
    position and how many waypoints were reached.
    """
    reached = 0
    pos = position
    for wp in waypoints:
        d = distance(pos, wp)
        if d <= budget + SNAP_EPS:
            budget -= d
            pos = (float(wp[0]), float(wp[1]))
            reached += 1
            if budget <= 0:
                # keep consuming zero-length segments
                budget = 0.0
            continue
        f = budget / d
        pos = (pos[0] + (wp[0] - pos[0]) * f, pos[1] + (wp[1] - pos[1]) * f)
        break
    return pos, reached


def path_length(points: Sequence[Point]) -> float:
    return sum(distance(points[k], points[k + 1]) for k in range(len(points) - 1))


def quantized_duration(length: float, speed: float, dt: float) -> float:
    """Travel time rounded up to the dt grid."""
    if length <= 0:
        return 0.0
    steps = math.ceil(length / (speed * dt) - 1e-9)
    # strip float noise from steps * dt
    return round(steps * dt, 9)


def route_points(start: Point, tour: Sequence[int], end: Point, tasks: Sequence[Task]) -> list[Point]:
    pts = [tuple(start)]
    for tid in tour:
        if not 1 <= tid <= len(tasks):
            raise InvalidScenarioError(f"unknown task id {tid}", "tour")
        pts.append(tasks[tid - 1].position)
    pts.append(tuple(end))
    return pts


def sample_polyline(points: Sequence[Point], speed: float, dt: float, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions at times ``k*dt`` (k < n_samples) moving along ``points``.

    Also returns the cumulative arc length at each vertex. Motion is
    parameterized by arc length, so there is no step-accumulation error.
    """
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(*(pts[1:] - pts[:-1]).T) if len(pts) > 1 else np.zeros(0)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    s = np.minimum(np.arange(n_samples) * (speed * dt), cum[-1])
    out = np.empty((n_samples, 2))
    if len(pts) == 1 or cum[-1] == 0:
        out[:] = pts[-1]
        return out, cum
    out[:, 0] = np.interp(s, cum, pts[:, 0])
    out[:, 1] = np.interp(s, cum, pts[:, 1])
    return out, cum


def build_timeline(start: Point, tour: Sequence[int], end: Point, speed: float, dt: float,
                   tasks: Sequence[Task], robot_id: int = 0, horizon: float | None = None) -> Timeline:
    """Sample a depot-to-depot tour at constant ``speed`` on the dt grid.

    The timeline is padded (robot parked at ``end``) up to ``horizon`` if given.
    """
    if speed <= 0:
        raise ValueError("speed must be > 0")
    pts = route_points(start, tour, end, tasks)
    length = path_length(pts)
    duration = quantized_duration(length, speed, dt)
    steps = int(round(duration / dt))
    if horizon is not None:
        steps = max(steps, int(round(horizon / dt)))
    positions, cum = sample_polyline(pts, speed, dt, steps + 1)
    s = np.minimum(np.arange(steps + 1) * (speed * dt), cum[-1])
    task_cum = cum[1:-1]
    completed = np.searchsorted(task_cum, s + SNAP_EPS, side="right") if len(tour) else np.zeros(steps + 1, int)
    task_times = tuple(quantized_duration(c, speed, dt) for c in task_cum)
    return Timeline(
        robot_id=robot_id,
        times=np.arange(steps + 1) * dt,
        positions=positions,
        completed=completed.astype(int),
        total_duration=duration,
        path_length=length,
        task_times=task_times,
    )


def mean_pairwise_task_distance(tasks: Sequence[Task]) -> float:
    if len(tasks) < 2:
        return 0.0
    pts = np.array([t.position for t in tasks], dtype=float)
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    iu = np.triu_indices(len(tasks), k=1)
    return float(d[iu].mean())
