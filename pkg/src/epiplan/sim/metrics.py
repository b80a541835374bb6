"""Run metrics derived from a trace."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .trace import SimTrace

CSV_COLUMNS = (
    "policy", "seed", "complete", "reason", "completion_time", "tasks_completed", "n_tasks",
    "total_distance", "interaction_count", "replan_count", "perceive_flags",
)


@dataclass(frozen=True)
class Metrics:
    completion_time: float
    tasks_completed: int
    n_tasks: int
    distance: tuple[float, ...]
    interaction_count: int
    replan_count: int
    perceive_flags: int = 0
    complete: bool = True
    reason: str | None = None
    policy: str = ""
    seed: int = 0

    @property
    def total_distance(self) -> float:
        return round(sum(self.distance), 6)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distance"] = list(self.distance)
        d["total_distance"] = self.total_distance
        return d

    def csv_row(self) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in CSV_COLUMNS}


def write_csv(rows, path=None, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def count_episodes(positions: np.ndarray, r_c: float) -> int:
    """Contiguous in-range intervals over all robot pairs; ``positions`` is (T, m, 2)."""
    total = 0
    m = positions.shape[1]
    for i in range(m):
        for j in range(i + 1, m):
            d = np.hypot(*(positions[:, i] - positions[:, j]).T)
            inr = d <= r_c
            total += int(inr[0]) + int(np.count_nonzero(inr[1:] & ~inr[:-1]))
    return total


def compute_metrics(trace: SimTrace, r_c: float | None = None) -> Metrics:
    end = trace.summary
    ticks = trace.ticks
    r_c = end.get("r_c") if r_c is None else r_c
    pos = np.array([t["pos"] for t in ticks], dtype=float)
    if len(pos) > 1:
        dist = np.hypot(*np.diff(pos, axis=0).transpose(2, 0, 1)).sum(axis=0)
    else:
        dist = np.zeros(pos.shape[1] if pos.ndim == 3 else 0)
    done = {e["task"] for e in trace.events("complete")}
    complete = bool(end.get("complete", False))
    return Metrics(
        # a timed-out run reports the time it was cut off
        completion_time=ticks[-1]["t"],
        tasks_completed=len(done),
        n_tasks=int(end.get("n_tasks", len(done))),
        distance=tuple(round(float(d), 6) for d in dist),
        interaction_count=count_episodes(pos, r_c) if len(pos) and r_c is not None else 0,
        replan_count=len(trace.events("replan")),
        perceive_flags=len(trace.events("perceive")),
        complete=complete,
        reason=end.get("reason"),
        policy=end.get("policy", ""),
        seed=int(end.get("seed", 0)),
    )
