"""JSON-lines simulation traces: one record per tick, then an end record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


def _r(x: float) -> float:
    return round(float(x), 6)


def point(p) -> list[float]:
    return [_r(p[0]), _r(p[1])]


@dataclass
class SimTrace:
    records: list[dict] = field(default_factory=list)

    def tick(self, t: float, positions, speeds, events: list, particles: dict | None = None) -> None:
        rec = {"type": "tick", "t": _r(t), "pos": [point(p) for p in positions],
               "speed": [_r(v) for v in speeds], "events": events}
        if particles is not None:
            rec["particles"] = particles
        self.records.append(rec)

    def end(self, **info) -> None:
        self.records.append({"type": "end", **info})

    @property
    def ticks(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "tick"]

    @property
    def summary(self) -> dict:
        for r in reversed(self.records):
            if r["type"] == "end":
                return r
        return {}

    def events(self, kind: str | None = None) -> list[dict]:
        out = []
        for r in self.ticks:
            for e in r["events"]:
                if kind is None or e["type"] == kind:
                    out.append({"t": r["t"], **e})
        return out

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path) -> "SimTrace":
        return cls([json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()])
