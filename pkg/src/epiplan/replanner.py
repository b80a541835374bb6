"""Online reallocation: workload-balancing bids, then MCTS tour sequencing.

Costs are times in seconds. Environment tasks cost straight-line travel,
find items cost the walk along a backtrack path and gossip items cost the
time to get within communication range of a predicted particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Point, distance
from .epistemic import FIND, GOSSIP, EpistemicTask, Stop, Trajectory, estimate_rendezvous

ENV = "environment_task"
ITEM_KINDS = (ENV, GOSSIP, FIND)


@dataclass(frozen=True)
class ReplanItem:
    kind: str
    payload: int | EpistemicTask

    def __post_init__(self):
        if self.kind not in ITEM_KINDS:
            raise ValueError(f"unknown item kind {self.kind!r}")

    @classmethod
    def task(cls, task_id: int) -> "ReplanItem":
        return cls(ENV, task_id)

    @classmethod
    def epistemic(cls, task: EpistemicTask) -> "ReplanItem":
        return cls(task.kind, task)

    @property
    def sort_key(self):
        if self.kind == ENV:
            return (0, self.payload, "")
        return (1, self.payload.target, self.kind)

    def label(self) -> str:
        return f"t{self.payload}" if self.kind == ENV else f"{self.kind}:{self.payload.target}"


@dataclass(frozen=True)
class RobotState:
    robot_id: int
    position: Point
    speed: float
    time: float = 0.0
    # None means the tour does not return anywhere
    end: Point | None = None


@dataclass(frozen=True)
class MctsParams:
    budget: int = 200
    c: float = math.sqrt(2)
    seed: int = 0
    return_to_depot: bool = True
    # "best": lowest-cost tour seen; "robust": follow the most-visited children
    final_selection: str = "best"

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if self.final_selection not in ("best", "robust"):
            raise ValueError("final_selection must be best or robust")


def exhaustive_budget(k: int) -> int:
    """Number of tree nodes below the root for ``k`` items; enough to expand all."""
    return sum(math.perm(k, i) for i in range(1, k + 1))


class CostModel:
    """Travel-time model for replan items as seen from one belief store."""

    def __init__(self, task_positions: Mapping[int, Point], r_c: float, dt: float,
                 trajectories: Mapping[tuple[int, int], Trajectory] | Callable | None = None,
                 return_to_depot: bool = True):
        self.task_positions = task_positions
        self.r_c = r_c
        self.dt = dt
        self._traj = trajectories or {}
        self.return_to_depot = return_to_depot
        self._cache: dict = {}

    def trajectory(self, task: EpistemicTask) -> Trajectory | None:
        if callable(self._traj):
            if task.ref not in self._cache:
                self._cache[task.ref] = self._traj(task)
            return self._cache[task.ref]
        return self._traj.get(task.ref)

    def _backtrack_leg(self, task: EpistemicTask, pos: Point, speed: float):
        path = task.path or (task.estimate,)
        length = distance(pos, path[0]) + sum(distance(path[k], path[k + 1]) for k in range(len(path) - 1))
        return length / speed, path[-1], [Stop(p, None, task.kind, task.target) for p in path]

    def leg(self, item: ReplanItem, pos: Point, t: float, speed: float):
        """(duration, end position, stops) of serving ``item`` from ``pos`` at time ``t``."""
        if speed <= 0:
            return math.inf, pos, []
        if item.kind == ENV:
            q = self.task_positions[item.payload]
            return distance(pos, q) / speed, q, [Stop(q, item.payload)]
        task: EpistemicTask = item.payload
        if item.kind == GOSSIP:
            traj = self.trajectory(task)
            hit = estimate_rendezvous(pos, speed, traj, self.r_c, start_time=t) if traj is not None else None
            if hit is not None:
                t_r, p = hit
                d = distance(pos, p)
                # where the robot is when range is first reached
                frac = min(1.0, speed * (t_r - t) / d) if d > 0 else 1.0
                here = (pos[0] + frac * (p[0] - pos[0]), pos[1] + frac * (p[1] - pos[1]))
                return max(t_r - t, 0.0), here, [Stop(p, None, GOSSIP, task.target)]
        return self._backtrack_leg(task, pos, speed)

    def walk(self, robot: RobotState, items: Sequence[ReplanItem]):
        t, pos = robot.time, robot.position
        stops: list[Stop] = []
        for it in items:
            d, pos, st = self.leg(it, pos, t, robot.speed)
            t += d
            stops.extend(st)
        if self.return_to_depot and robot.end is not None:
            t += distance(pos, robot.end) / robot.speed if robot.speed > 0 else (0.0 if pos == robot.end else math.inf)
        return t - robot.time, stops

    def tour_cost(self, robot: RobotState, items: Sequence[ReplanItem]) -> float:
        return self.walk(robot, items)[0]

    def tour_stops(self, robot: RobotState, items: Sequence[ReplanItem]) -> list[Stop]:
        return self.walk(robot, items)[1]


def partition_tasks(robots: Sequence[RobotState], items: Sequence[ReplanItem],
                    cost: CostModel | Callable) -> dict[int, list[ReplanItem]]:
    """Assign each item to the robot whose tour plus that item finishes soonest.

    Items are taken environment tasks first by id, then epistemic items by
    target; ties go to the lowest robot id.
    """
    cost_fn = cost.tour_cost if isinstance(cost, CostModel) else cost
    out: dict[int, list[ReplanItem]] = {r.robot_id: [] for r in robots}
    if not robots:
        if items:
            raise ValueError("no robots to assign items to")
        return out
    ordered = sorted(robots, key=lambda r: r.robot_id)
    for item in sorted(items, key=lambda it: it.sort_key):
        bids = [(cost_fn(r, out[r.robot_id] + [item]), r.robot_id) for r in ordered]
        out[min(bids)[1]].append(item)
    return out


@dataclass
class SearchNode:
    tour: tuple[int, ...]
    untried: list[int]
    parent: "SearchNode | None" = None
    children: list["SearchNode"] = field(default_factory=list)
    visits: int = 0
    total: float = 0.0
    best_cost: float = math.inf
    best_tour: tuple[int, ...] | None = None
    # subtree fully enumerated; selection skips it
    done: bool = False

    @property
    def mean(self) -> float:
        return self.total / self.visits if self.visits else 0.0


def uct_select(node: SearchNode, c: float) -> SearchNode:
    if not node.children:
        raise ValueError("cannot select from a node without children; expand it first")
    live = [ch for ch in node.children if not ch.done] or node.children
    for ch in live:
        if ch.visits == 0:
            return ch
    log_n = math.log(max(node.visits, 1))
    best, best_score = None, -math.inf
    for ch in live:
        score = ch.mean + c * math.sqrt(log_n / ch.visits)
        if score > best_score:
            best, best_score = ch, score
    return best


def simulate_rollout(partial: Sequence[ReplanItem], remaining: Sequence[ReplanItem], robot: RobotState,
                     cost: CostModel, rng: np.random.Generator) -> float:
    """Negative completion time of ``partial`` followed by a random order of ``remaining``."""
    order = rng.permutation(len(remaining)) if len(remaining) > 1 else range(len(remaining))
    return -cost.tour_cost(robot, [*partial, *(remaining[k] for k in order)])


def mcts_plan(robot: RobotState, items: Sequence[ReplanItem], cost: CostModel,
              params: MctsParams | None = None) -> list[ReplanItem]:
    """Order ``items`` for one robot by UCT tree search over tour prefixes."""
    p = params or MctsParams()
    k = len(items)
    if k <= 1:
        return list(items)
    rng = np.random.default_rng(p.seed)
    root = SearchNode((), list(range(k)))
    scale = None
    for _ in range(p.budget):
        if root.done:
            break
        node = root
        while not node.untried and node.children:
            node = uct_select(node, p.c)
        if node.untried:
            idx = node.untried.pop(0)
            tour = node.tour + (idx,)
            child = SearchNode(tour, [i for i in range(k) if i not in tour], parent=node)
            node.children.append(child)
            node = child
        rest = [i for i in range(k) if i not in node.tour]
        perm = [rest[j] for j in rng.permutation(len(rest))] if len(rest) > 1 else rest
        full = node.tour + tuple(perm)
        c = cost.tour_cost(robot, [items[i] for i in full])
        if scale is None:
            scale = c if 0 < c < math.inf else 1.0
        reward = -c / scale if math.isfinite(c) else -1e9
        if len(node.tour) >= k - 1:
            node.done = True
        while node is not None:
            if not node.done and not node.untried and all(ch.done for ch in node.children):
                node.done = True
            node.visits += 1
            node.total += reward
            if c < node.best_cost:
                node.best_cost, node.best_tour = c, full
            node = node.parent
    if p.final_selection == "robust":
        node = root
        while node.children:
            node = max(node.children, key=lambda ch: ch.visits)
        chosen = node.best_tour
    else:
        chosen = root.best_tour
    return [items[i] for i in chosen]
