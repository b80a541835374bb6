"""Makespan, interaction reward and penalty for candidate plans.

Reward weight ``rho`` is handled in seconds: half the mean pairwise task
distance divided by the fastest robot's speed, so rewards and penalties are
commensurate with the time-valued makespan they are added to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core import Scenario, Timeline, mean_pairwise_task_distance, quantized_duration, sample_polyline
from .chromosome import Chromosome, Routes, decode

MINMAX, REWARD, BILEVEL = "minmax", "reward", "bilevel"
MODES = (MINMAX, REWARD, BILEVEL)


@dataclass(frozen=True)
class RewardParams:
    rho: float
    sigma: float = 0.5
    # explicit per-robot [tau_s, tau_e]; robots missing here use window_fractions
    windows: Mapping[int, tuple[float, float]] | None = None
    window_fractions: tuple[float, float] = (0.1, 0.9)

    def window(self, robot_id: int, tour_duration: float) -> tuple[float, float]:
        if self.windows and robot_id in self.windows:
            return self.windows[robot_id]
        lo, hi = self.window_fractions
        return (lo * tour_duration, hi * tour_duration)


def default_rho(scenario: Scenario) -> float:
    v = scenario.max_speed
    return 0.5 * mean_pairwise_task_distance(scenario.tasks) / v if v > 0 else 0.0


def reward_params_for(scenario: Scenario, sigma: float = 0.5, rho: float | None = None) -> RewardParams:
    return RewardParams(rho=default_rho(scenario) if rho is None else rho, sigma=sigma)


@dataclass(frozen=True)
class FitnessReport:
    makespan: float
    r_tot: float
    p_tot: float
    objective: float
    interaction_events: tuple[tuple[float, tuple[int, int]], ...] = ()
    durations: tuple[float, ...] = ()
    mode: str = MINMAX
    q_star: float | None = None
    feasible: bool = True

    @property
    def interaction_count(self) -> int:
        return len(self.interaction_events)

    @property
    def bilevel_score(self) -> float | None:
        """R - P - dQ, the quantity the second bilevel stage maximizes."""
        if self.q_star is None:
            return None
        return self.r_tot - self.p_tot - (self.makespan - self.q_star)

    def to_dict(self) -> dict:
        return {
            "makespan": self.makespan,
            "r_tot": self.r_tot,
            "p_tot": self.p_tot,
            "objective": self.objective,
            "interaction_events": [[t, list(pair)] for t, pair in self.interaction_events],
            "durations": list(self.durations),
            "mode": self.mode,
            "q_star": self.q_star,
            "feasible": self.feasible,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitnessReport":
        return cls(
            makespan=d["makespan"], r_tot=d["r_tot"], p_tot=d["p_tot"], objective=d["objective"],
            interaction_events=tuple((t, tuple(p)) for t, p in d.get("interaction_events", [])),
            durations=tuple(d.get("durations", [])), mode=d.get("mode", MINMAX),
            q_star=d.get("q_star"), feasible=d.get("feasible", True),
        )


def potential_reward(x: float, phi: float) -> float:
    """Piecewise potential: linear up to ``phi``, flat until ``2*phi``, zero after."""
    if 0 < x <= phi:
        return x
    if phi < x <= 2 * phi:
        return phi
    return 0.0


def robot_reward(interaction_times: Sequence[float], window: tuple[float, float], rho: float,
                 t_lr: float | None = None) -> tuple[float, list[tuple[float, float]]]:
    """Reward collected by one robot from its interaction times.

    The last-reward clock starts at the window opening unless ``t_lr`` is given,
    and only advances when a nonzero reward is granted.
    """
    tau_s, tau_e = window
    phi = (tau_e - tau_s) / 2
    last = tau_s if t_lr is None else t_lr
    total = 0.0
    grants = []
    for t in sorted(interaction_times):
        if not tau_s <= t <= tau_e:
            continue
        r = rho * potential_reward(t - last, phi)
        if r != 0:
            total += r
            grants.append((t, r))
            last = t
    return total, grants


def robot_penalty(t_int: float | None, t_max: float, sigma: float, rho: float) -> float:
    # no interaction (or only after the tour ends) counts as interacting at t_max
    t = t_max if t_int is None else min(t_int, t_max)
    if t > sigma * t_max:
        return (t - sigma * t_max) * rho
    return 0.0


def episode_starts(positions: np.ndarray, r_c: float, skip_initial: bool = True) -> list[tuple[int, int, int]]:
    """Start indices of contiguous in-range intervals per robot pair.

    ``positions`` has shape (m, T, 2). Returns (k, i, j) with 0-based robot
    indices i < j. Contact already present at k = 0 (e.g. a shared start
    depot) is not a rendezvous and is dropped when ``skip_initial``.
    """
    m = positions.shape[0]
    out = []
    for i in range(m):
        for j in range(i + 1, m):
            d = np.hypot(*(positions[i] - positions[j]).T)
            inr = d <= r_c
            if not inr.any():
                continue
            starts = np.flatnonzero(inr[1:] & ~inr[:-1]) + 1
            if inr[0] and not skip_initial:
                starts = np.concatenate(([0], starts))
            out.extend((int(k), i, j) for k in starts)
    out.sort()
    return out


def _stack(timelines: Sequence[Timeline]) -> np.ndarray:
    T = max(len(tl.times) for tl in timelines)
    out = np.empty((len(timelines), T, 2))
    for k, tl in enumerate(timelines):
        out[k, :len(tl.times)] = tl.positions
        out[k, len(tl.times):] = tl.positions[-1]
    return out


def interaction_events(timelines: Sequence[Timeline], r_c: float, dt: float) -> list[tuple[float, tuple[int, int]]]:
    ids = [tl.robot_id for tl in timelines]
    return [(k * dt, (ids[i], ids[j])) for k, i, j in episode_starts(_stack(timelines), r_c)]


def _per_robot_times(events, ids) -> dict[int, list[float]]:
    times: dict[int, list[float]] = {r: [] for r in ids}
    for t, (a, b) in events:
        for r in (a, b):
            if not times[r] or times[r][-1] != t:
                times[r].append(t)
    return times


def interaction_reward(timelines: Sequence[Timeline], params: RewardParams, r_c: float,
                       dt: float | None = None) -> tuple[float, list[tuple[float, tuple[int, int]]]]:
    """Total interaction reward and the interaction episodes it was computed from."""
    if dt is None:
        dt = float(timelines[0].times[1] - timelines[0].times[0]) if len(timelines[0].times) > 1 else 1.0
    events = interaction_events(timelines, r_c, dt)
    times = _per_robot_times(events, [tl.robot_id for tl in timelines])
    total = 0.0
    for tl in timelines:
        r, _ = robot_reward(times[tl.robot_id], params.window(tl.robot_id, tl.total_duration), params.rho)
        total += r
    return total, events


def interaction_penalty(timelines: Sequence[Timeline], sigma: float, rho: float,
                        events: Sequence[tuple[float, tuple[int, int]]]) -> float:
    times = _per_robot_times(events, [tl.robot_id for tl in timelines])
    return sum(
        robot_penalty(times[tl.robot_id][0] if times[tl.robot_id] else None, tl.total_duration, sigma, rho)
        for tl in timelines
    )


class Evaluator:
    """Scores routes for one scenario; caches nothing itself and is picklable."""

    def __init__(self, scenario: Scenario, reward_params: RewardParams | None = None):
        self.scenario = scenario
        self.params = reward_params or reward_params_for(scenario)
        self.n, self.m = scenario.n, scenario.m
        self.dt = scenario.dt
        self.task_pos = [t.position for t in scenario.tasks]
        self.starts = [r.start_depot for r in scenario.robots]
        self.ends = [r.end_depot for r in scenario.robots]
        self.speeds = [r.max_speed for r in scenario.robots]
        pts = np.array(self.task_pos + self.starts + self.ends, dtype=float).reshape(-1, 2)
        self._dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1]).tolist()

    def route_length(self, s: int, route: Sequence[int]) -> float:
        d = self._dist
        prev = self.n + s
        total = 0.0
        for t in route:
            total += d[prev][t - 1]
            prev = t - 1
        return total + d[prev][self.n + self.m + s]

    def duration(self, s: int, route: Sequence[int]) -> float:
        return quantized_duration(self.route_length(s, route), self.speeds[s], self.dt)

    def lengths(self, routes: Routes) -> list[float]:
        return [self.route_length(s, r) for s, r in enumerate(routes)]

    def durations(self, routes: Routes) -> list[float]:
        return [quantized_duration(L, self.speeds[s], self.dt) for s, L in enumerate(self.lengths(routes))]

    def makespan(self, routes: Routes) -> float:
        return max(self.durations(routes))

    def _positions(self, routes: Routes, durations: Sequence[float]) -> np.ndarray:
        steps = int(round(max(durations) / self.dt))
        out = np.empty((self.m, steps + 1, 2))
        for s, r in enumerate(routes):
            pts = [self.starts[s], *(self.task_pos[t - 1] for t in r), self.ends[s]]
            out[s], _ = sample_polyline(pts, self.speeds[s], self.dt, steps + 1)
        return out

    def report(self, routes: Routes, mode: str = MINMAX, q_star: float | None = None,
               delta: float | None = None) -> FitnessReport:
        if isinstance(routes, Chromosome):
            routes = decode(routes)
        durs = self.durations(routes)
        q = max(durs)
        p = self.params
        events = [(k * self.dt, (i + 1, j + 1)) for k, i, j in episode_starts(self._positions(routes, durs), self.scenario.r_c)]
        times = _per_robot_times(events, range(1, self.m + 1))
        r_tot = 0.0
        p_tot = 0.0
        for s in range(self.m):
            rt = times[s + 1]
            r_tot += robot_reward(rt, p.window(s + 1, durs[s]), p.rho)[0]
            p_tot += robot_penalty(rt[0] if rt else None, durs[s], p.sigma, p.rho)
        feasible = True
        if mode == MINMAX:
            objective = q
        elif mode in (REWARD, BILEVEL):
            objective = q - r_tot + p_tot
            if mode == BILEVEL:
                if q_star is None or delta is None:
                    raise ValueError("bilevel evaluation needs q_star and delta")
                feasible = q <= (1 + delta) * q_star
                if not feasible:
                    objective = math.inf
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return FitnessReport(q, r_tot, p_tot, objective, tuple(events), tuple(durs), mode, q_star, feasible)


def evaluate(chromosome: Chromosome, scenario: Scenario, reward_params: RewardParams | None = None,
             mode: str = MINMAX, q_star: float | None = None, delta: float | None = None) -> FitnessReport:
    """Score a chromosome at each robot's max speed."""
    return Evaluator(scenario, reward_params).report(decode(chromosome), mode, q_star, delta)


def plan_timelines(scenario: Scenario, routes: Routes) -> list[Timeline]:
    from ..core import build_timeline

    return [
        build_timeline(r.start_depot, routes[k], r.end_depot, r.max_speed, scenario.dt, scenario.tasks, robot_id=r.id)
        for k, r in enumerate(scenario.robots)
    ]

