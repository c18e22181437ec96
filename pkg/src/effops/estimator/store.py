"""JSON-backed store of measured points and curves."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..evalbench.curves import TradeoffCurve, TradeoffPoint

Key = tuple[str, int, str]


@dataclass
class MeasurementStore:
    records: dict[Key, TradeoffPoint | TradeoffCurve] = field(default_factory=dict)

    def put(self, task: str, seed: int, pipeline: str, m: TradeoffPoint | TradeoffCurve,
            overwrite: bool = True) -> None:
        key = (task, int(seed), pipeline)
        if key in self.records and not overwrite:
            raise KeyError(f"duplicate measurement {key}")
        self.records[key] = m

    def get(self, task: str, seed: int, pipeline: str):
        return self.records.get((task, int(seed), pipeline))

    def has(self, task: str, seed: int, pipeline: str) -> bool:
        return (task, int(seed), pipeline) in self.records

    def tasks(self) -> list[str]:
        return sorted({k[0] for k in self.records})

    def seeds(self, task: str) -> list[int]:
        return sorted({k[1] for k in self.records if k[0] == task})

    def to_json(self) -> list[dict]:
        out = []
        for (task, seed, pipe), m in sorted(self.records.items()):
            rec = {"task": task, "seed": seed, "pipeline": pipe}
            if isinstance(m, TradeoffCurve):
                rec["curve"] = [p.to_dict() for p in m.points]
            else:
                rec["point"] = m.to_dict()
            out.append(rec)
        return out

    @classmethod
    def from_json(cls, records: list[dict]) -> "MeasurementStore":
        store = cls()
        for r in records:
            if "curve" in r:
                m = TradeoffCurve(tuple(TradeoffPoint.from_dict(p) for p in r["curve"]))
            elif "point" in r:
                m = TradeoffPoint.from_dict(r["point"])
            else:
                raise ValueError(f"record without point or curve: {r}")
            store.put(r["task"], r["seed"], r["pipeline"], m, overwrite=False)
        return store

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=1))
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MeasurementStore":
        path = Path(path)
        if not path.exists():
            return cls()
        return cls.from_json(json.loads(path.read_text()))
