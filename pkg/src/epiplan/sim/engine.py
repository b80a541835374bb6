"""Discrete-time mission executor for the epistemic and baseline policies.

Tick order: apply due faults, move robots (completing tasks), propagate
belief stores, announce within each connected set, perceive checks,
replanning where triggered, then write the trace record. The loop stops when
every task is done and every operational robot is parked at its end depot,
or at the timeout.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import DEGRADE_2, FULL_STOP, Disposition, Point, Scenario, advance, distance, path_length, quantized_duration
from ..epistemic import (
    FAILED,
    FIND,
    GOSSIP,
    LOST,
    OK,
    BeliefStore,
    Particle,
    Stop,
    announce,
    complete_update,
    init_particles,
    perceive_check,
    predict_trajectory,
    propagate,
    self_fault_update,
    task_stops,
)
from ..replanner import CostModel, MctsParams, ReplanItem, RobotState, mcts_plan, partition_tasks
from .metrics import Metrics, compute_metrics
from .trace import SimTrace, point

log = logging.getLogger(__name__)

EPISTEMIC, BASELINE = "epistemic", "baseline"
POLICIES = (EPISTEMIC, BASELINE)


@dataclass
class Agent:
    id: int
    position: Point
    speed: float
    max_speed: float
    route: list[Stop]
    end: Point
    nominal_duration: float
    alive: bool = True
    distance: float = 0.0
    arrived_at: float | None = None
    fault_level: int = 1
    store: BeliefStore | None = None
    # baseline: id of the robot this one is searching for
    searching: int | None = None

    @property
    def at_end(self) -> bool:
        return not self.route and distance(self.position, self.end) <= 1e-9

    def route_tasks(self) -> tuple[int, ...]:
        return tuple(s.task_id for s in self.route if s.task_id is not None)

    def move(self, dt: float) -> list[Stop]:
        if not self.alive or self.speed <= 0:
            return []
        start = self.position
        wps = itertools.chain((s.position for s in self.route), (self.end,))
        self.position, reached = advance(start, wps, self.speed * dt)
        if reached > len(self.route):
            pts = [start, *(s.position for s in self.route), self.end]
            self.distance += sum(distance(pts[k], pts[k + 1]) for k in range(len(pts) - 1))
        else:
            self.distance += self.speed * dt
        popped = self.route[:reached]
        del self.route[:reached]
        return popped


@dataclass(frozen=True)
class SimParams:
    mcts: MctsParams = field(default_factory=MctsParams)
    timeout_factor: float = 10.0
    include_particles: bool = False
    # replan when a rendezvous point is passed without meeting the target
    replan_on_missed_gossip: bool = True


@dataclass
class WorldState:
    time: float
    agents: list[Agent]
    tasks_done: set[int]

    def connectivity(self, r_c: float) -> dict[int, set[int]]:
        g = {a.id: set() for a in self.agents}
        for a, b in itertools.combinations(self.agents, 2):
            if distance(a.position, b.position) <= r_c:
                g[a.id].add(b.id)
                g[b.id].add(a.id)
        return g

    def components(self, r_c: float) -> list[list[int]]:
        g = self.connectivity(r_c)
        seen, out = set(), []
        for s in sorted(g):
            if s in seen:
                continue
            comp, todo = [], [s]
            seen.add(s)
            while todo:
                u = todo.pop()
                comp.append(u)
                for v in sorted(g[u] - seen):
                    seen.add(v)
                    todo.append(v)
            out.append(sorted(comp))
        return out


def _nominal_particle(scenario: Scenario, tour, robot_id: int, factor: float, steps: int, dt: float) -> Particle:
    r = scenario.robot(robot_id)
    p = Particle(robot_id, robot_id, 0, r.max_speed * factor, list(task_stops(tour, scenario)),
                 r.start_depot, r.end_depot, [r.start_depot])
    for _ in range(steps):
        p.step(dt)
    return p


class Simulation:
    def __init__(self, scenario: Scenario, tours: Sequence[Sequence[int]], policy: str = EPISTEMIC,
                 seed: int = 0, params: SimParams | None = None):
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if len(tours) != scenario.m:
            raise ValueError("plan must give one tour per robot")
        self.sc = scenario
        self.tours = [tuple(t) for t in tours]
        self.policy = policy
        self.seed = seed
        self.p = params or SimParams()
        self.dt = scenario.dt
        self.trace = SimTrace()
        self.tick_index = 0
        self.replans = 0
        self.remaining_faults = sorted(scenario.faults, key=lambda f: (f.time, f.robot_id))
        stores = init_particles(self.tours, scenario) if policy == EPISTEMIC else [None] * scenario.m
        agents = []
        for r, tour, st in zip(scenario.robots, self.tours, stores):
            route = list(task_stops(tour, scenario))
            pts = [r.start_depot, *(s.position for s in route), r.end_depot]
            nominal = quantized_duration(path_length(pts), r.max_speed, self.dt)
            agents.append(Agent(r.id, r.start_depot, r.max_speed, r.max_speed, route, r.end_depot, nominal, store=st))
        self.world = WorldState(0.0, agents, set())
        self.makespan = max((a.nominal_duration for a in agents), default=0.0)
        self.timeout = max(self.p.timeout_factor * self.makespan, 100 * self.dt)
        self.handled: set[int] = set()

    # ---- helpers -------------------------------------------------------
    def agent(self, rid: int) -> Agent:
        return self.world.agents[rid - 1]

    @property
    def t(self) -> float:
        return self.tick_index * self.dt

    def finished(self) -> bool:
        if len(self.world.tasks_done) < self.sc.n:
            return False
        return all(a.at_end for a in self.world.agents if a.alive)

    # ---- faults --------------------------------------------------------
    def apply_faults(self, events: list) -> set[int]:
        hit = set()
        while self.remaining_faults and self.remaining_faults[0].time <= self.t + 1e-9:
            f = self.remaining_faults.pop(0)
            a = self.agent(f.robot_id)
            if not a.alive:
                continue
            hit.add(a.id)
            events.append({"type": "fault", "robot": a.id, "kind": f.kind})
            if self.policy == EPISTEMIC:
                target = self_fault_update(a.store, f.kind, self.t)
                if target is None:
                    self._stop(a)
                else:
                    # follow the empathy particle teammates will use to predict this robot
                    p = a.store.particles[(a.id, target)]
                    a.position, a.route, a.speed = p.position, list(p.remaining), p.speed
                    a.fault_level = target
            else:
                level = 4 if f.kind == FULL_STOP else max(2 if f.kind == DEGRADE_2 else 3, a.fault_level + 1)
                if level > len(self.sc.speed_factors):
                    self._stop(a)
                else:
                    p = _nominal_particle(self.sc, self.tours[a.id - 1], a.id, self.sc.speed_factors[level - 1],
                                          self.tick_index, self.dt)
                    a.position, a.route, a.speed = p.position, list(p.remaining), p.speed
                    a.fault_level = level
        return hit

    def _stop(self, a: Agent) -> None:
        a.speed = 0.0
        a.alive = False

    # ---- motion --------------------------------------------------------
    def move_all(self, events: list) -> dict[int, list[Stop]]:
        popped = {}
        for a in self.world.agents:
            was_end = a.at_end
            stops = a.move(self.dt)
            popped[a.id] = stops
            for s in stops:
                if s.task_id is None:
                    continue
                if s.task_id not in self.world.tasks_done:
                    self.world.tasks_done.add(s.task_id)
                    events.append({"type": "complete", "robot": a.id, "task": s.task_id})
                if a.store is not None:
                    complete_update(a.store, a.id, s.task_id)
            if a.alive and a.at_end and not was_end:
                a.arrived_at = self.t + self.dt
        return popped

    # ---- epistemic policy ---------------------------------------------
    def _disposition(self, a: Agent) -> Disposition:
        return Disposition(a.id, a.speed if a.alive else 0.0, a.route_tasks())

    def _all_known_done(self, store: BeliefStore) -> bool:
        return len(store.known_done) >= self.sc.n

    def _announce(self, comp: list[int]):
        agents = [self.agent(j) for j in comp]
        for a in agents:
            a.route = [s for s in a.route if s.target is None or s.target not in comp]
        out = announce([a.store for a in agents], {a.id: self._disposition(a) for a in agents},
                        {a.id: tuple(a.route) for a in agents}, {a.id: a.position for a in agents}, self.t)
        # once every task is known done, contacting anyone else serves no purpose
        if self._all_known_done(agents[0].store):
            for a in agents:
                a.route = [s for s in a.route if s.target is None]
        return out

    def _missed_epistemic(self, a: Agent, popped: list[Stop], now: float) -> bool:
        """Handle epistemic stops passed without meeting the target; True if a replan is due."""
        due = False
        for s in popped:
            if s.target is None or any(r.target == s.target and r.kind == s.kind for r in a.route):
                continue
            st = a.store
            if st.status.get(s.target) != OK:
                continue
            if s.kind == FIND:
                # backtrack exhausted without contact
                st.status[s.target] = LOST
                st.stamp[s.target] = now
                st.pending_tasks = [t for t in st.pending_tasks if t.target != s.target]
                due = True
            elif s.kind == GOSSIP and self.p.replan_on_missed_gossip:
                due = True
        return due

    def _replan_items(self, comp: list[int], store: BeliefStore) -> list[ReplanItem]:
        env: set[int] = set()
        for j in comp:
            env.update(self.agent(j).route_tasks())
        for k in store.subjects:
            if k in comp:
                continue
            # tasks of a missing robot are taken over once it is found stopped or the search gave up
            if store.status.get(k) in (FAILED, LOST):
                env.update(store.known_dispositions[k].assigned_tasks)
        env -= store.known_done
        items = [ReplanItem.task(t) for t in sorted(env)]
        if self._all_known_done(store):
            return items
        for task in store.pending_tasks:
            # contact only pays off if the target may still hold unfinished tasks
            if task.target not in comp and store.status.get(task.target) == OK and store.outstanding(task.target):
                items.append(ReplanItem.epistemic(task))
        return items

    def _cost_model(self, store: BeliefStore, robots: list[RobotState]) -> CostModel:
        t, dt = self.t, self.dt
        slowest = min(r.speed for r in robots)

        def traj(task):
            p = store.particles[task.ref]
            pts = [p.position, *(s.position for s in p.remaining), p.end]
            rem = sum(distance(pts[k], pts[k + 1]) for k in range(len(pts) - 1)) / p.speed if p.speed > 0 else 0.0
            reach = max(distance(r.position, p.end) for r in robots) / slowest
            return predict_trajectory(p, t, dt, rem + reach + 2 * dt)

        positions = {tk.id: tk.position for tk in self.sc.tasks}
        return CostModel(positions, self.sc.r_c, dt, traj, return_to_depot=self.p.mcts.return_to_depot)

    def replan(self, comp: list[int], events: list, reason: str) -> None:
        store = self.agent(comp[0]).store
        ops = [self.agent(j) for j in comp if self.agent(j).alive]
        if not ops:
            return
        items = self._replan_items(comp, store)
        before = {j: [s.task_id if s.task_id is not None else f"{s.kind}:{s.target}" for s in self.agent(j).route]
                  for j in comp}
        robots = [RobotState(a.id, a.position, a.speed, self.t, a.end) for a in ops]
        cost = self._cost_model(store, robots)
        alloc = partition_tasks(robots, items, cost)
        for r in robots:
            ss = np.random.SeedSequence([self.seed, self.tick_index, r.robot_id])
            mp = MctsParams(self.p.mcts.budget, self.p.mcts.c, int(ss.generate_state(1)[0]),
                            self.p.mcts.return_to_depot, self.p.mcts.final_selection)
            order = mcts_plan(r, alloc[r.robot_id], cost, mp)
            self.agent(r.robot_id).route = cost.tour_stops(r, order)
        for j in comp:
            if not self.agent(j).alive:
                self.agent(j).route = []
        self.replans += 1
        events.append({
            "type": "replan", "robots": comp, "reason": reason,
            "before": {str(j): v for j, v in before.items()},
            "after": {str(j): [s.task_id if s.task_id is not None else f"{s.kind}:{s.target}"
                               for s in self.agent(j).route] for j in comp},
        })
        if len(comp) > 1:
            self._announce(comp)

    def epistemic_step(self, events: list, faulted: set[int], popped: dict[int, list[Stop]]) -> None:
        for a in self.world.agents:
            propagate(a.store, self.dt)
        now = self.t
        comps = self.world.components(self.sc.r_c)
        triggered: dict[tuple, str] = {}
        for comp in comps:
            key = tuple(comp)
            if any(self._missed_epistemic(self.agent(j), popped[j], now) for j in comp):
                triggered[key] = "missed"
            if len(comp) > 1:
                out = self._announce(comp)
                if out.surprise:
                    triggered.setdefault(key, "announce")
                    events.append({"type": "announce", "robots": comp, "about": sorted(out.surprised_about)})
                if faulted & set(comp):
                    triggered.setdefault(key, "fault")
        pos = {a.id: a.position for a in self.world.agents}
        for comp in comps:
            flagged_any = False
            for j in comp:
                a = self.agent(j)
                sensed = {k: p for k, p in pos.items() if k != j and distance(p, a.position) <= self.sc.r_s}
                flags = perceive_check(a.position, a.store, sensed, self.sc.r_s, now)
                for k, b in flags:
                    events.append({"type": "perceive", "robot": j, "subject": k, "index": b})
                flagged_any |= bool(flags)
            if flagged_any:
                if len(comp) > 1:
                    self._announce(comp)
                triggered.setdefault(tuple(comp), "perceive")
        for comp in comps:
            if tuple(comp) in triggered:
                self.replan(comp, events, triggered[tuple(comp)])

    # ---- baseline ------------------------------------------------------
    def baseline_step(self, events: list) -> None:
        now = self.t
        agents = self.world.agents
        for a in agents:
            if a.searching is None:
                continue
            k = self.agent(a.searching)
            if distance(a.position, k.position) <= self.sc.r_c:
                self._transfer(a, k, events)
            elif a.at_end:
                events.append({"type": "search_failed", "robot": a.id, "target": k.id})
                self.handled.add(k.id)
                a.searching = None
        # never arrived, not out searching, and past the nominal duration plus one tick of grace
        overdue = [a for a in agents if a.arrived_at is None and a.searching is None and a.id not in self.handled
                   and now > a.nominal_duration + self.dt + 1e-9
                   and not any(b.searching == a.id for b in agents)]
        for k in overdue:
            free = [b for b in agents if b.alive and b.at_end and b.searching is None and b.arrived_at is not None]
            if not free:
                break
            s = min(free, key=lambda b: (b.arrived_at, b.id))
            s.searching = k.id
            # from the far end of the missing robot's nominal path back to its start
            nominal = [self.sc.task_position(t) for t in self.tours[k.id - 1]]
            path = [k.end, *reversed(nominal), self.sc.robot(k.id).start_depot]
            s.route = [Stop(p, None, FIND, k.id) for p in path]
            self.replans += 1
            events.append({"type": "replan", "robots": [s.id], "reason": "overdue", "target": k.id})

    def _transfer(self, searcher: Agent, k: Agent, events: list) -> None:
        takers = [searcher] + ([k] if k.alive else [])
        pool = sorted(t for t in k.route_tasks() if t not in self.world.tasks_done)
        new = {a.id: [] for a in takers}
        clock = {a.id: 0.0 for a in takers}
        here = {a.id: a.position for a in takers}
        while pool:
            # least-loaded robot takes its nearest task
            a = min(takers, key=lambda b: (clock[b.id], b.id))
            t = min(pool, key=lambda t: (distance(here[a.id], self.sc.task_position(t)), t))
            pool.remove(t)
            q = self.sc.task_position(t)
            clock[a.id] += distance(here[a.id], q) / a.speed
            here[a.id] = q
            new[a.id].append(t)
        for a in takers:
            a.route = list(task_stops(new[a.id], self.sc))
        if not k.alive:
            k.route = []
        self.handled.add(k.id)
        searcher.searching = None
        self.replans += 1
        events.append({"type": "replan", "robots": [a.id for a in takers], "reason": "found", "target": k.id,
                       "after": {str(a.id): new[a.id] for a in takers}})

    # ---- loop ----------------------------------------------------------
    def record(self, events: list) -> None:
        parts = None
        if self.p.include_particles and self.policy == EPISTEMIC:
            parts = {str(a.id): a.store.snapshot() for a in self.world.agents}
        self.trace.tick(self.t, [a.position for a in self.world.agents],
                        [a.speed for a in self.world.agents], events, parts)

    def run(self) -> tuple[SimTrace, Metrics]:
        events: list = []
        if self.policy == EPISTEMIC:
            for comp in self.world.components(self.sc.r_c):
                if len(comp) > 1:
                    self._announce(comp)
        self.record(events)
        reason = None
        while not self.finished():
            if self.t >= self.timeout - 1e-9:
                reason = "timeout"
                break
            events = []
            faulted = self.apply_faults(events)
            popped = self.move_all(events)
            self.tick_index += 1
            if self.policy == EPISTEMIC:
                self.epistemic_step(events, faulted, popped)
            else:
                self.baseline_step(events)
            self.world.time = self.t
            self.record(events)
        self.trace.end(policy=self.policy, seed=self.seed, complete=reason is None, reason=reason,
                       n_tasks=self.sc.n, r_c=self.sc.r_c, makespan=self.makespan,
                       tasks_done=sorted(self.world.tasks_done),
                       final_positions=[point(a.position) for a in self.world.agents])
        return self.trace, compute_metrics(self.trace)


def run(scenario: Scenario, plan, policy: str = EPISTEMIC, seed: int = 0,
        params: SimParams | None = None) -> tuple[SimTrace, Metrics]:
    """Execute ``plan`` (a Plan or a list of tours) on ``scenario`` under ``policy``."""
    tours = plan.tours if hasattr(plan, "tours") else plan
    return Simulation(scenario, tours, policy, seed, params).run()
