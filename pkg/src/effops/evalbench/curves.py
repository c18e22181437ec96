"""Tradeoff points/curves, their CSV form, and the curve distance."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CURVE_COLUMNS = ("threshold", "avg_exit_layer", "mean_macs", "wallclock_ms", "accuracy")
GRID_POINTS = 100


@dataclass(frozen=True)
class TradeoffPoint:
    time_cost: float  # mean MACs per example
    accuracy: float  # fraction in [0, 1]
    threshold: float | None = None
    avg_exit_layer: float | None = None
    wallclock_ms: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if not self.time_cost > 0:
            raise ValueError(f"time_cost must be positive, got {self.time_cost}")

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "time": self.time_cost, "accuracy": self.accuracy,
                "avg_exit_layer": self.avg_exit_layer, "wallclock_ms": self.wallclock_ms}

    @classmethod
    def from_dict(cls, d: dict) -> "TradeoffPoint":
        return cls(float(d["time"]), float(d["accuracy"]), d.get("threshold"),
                   d.get("avg_exit_layer"), d.get("wallclock_ms"))


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple[TradeoffPoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: (p.time_cost, -1 if p.threshold is None else p.threshold)))
        object.__setattr__(self, "points", pts)

    @property
    def t_min(self) -> float:
        """Cheapest point's time: the exit-after-one-layer cost for early-exit curves."""
        return self.points[0].time_cost

    @property
    def t_max(self) -> float:
        return self.points[-1].time_cost

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time_cost for p in self.points])

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([p.accuracy for p in self.points])

    def __len__(self) -> int:
        return len(self.points)


def _dedup(curve: TradeoffCurve) -> tuple[np.ndarray, np.ndarray]:
    """Collapse equal-time points to their mean accuracy."""
    t, a = curve.times, curve.accuracies
    ut = np.unique(t)
    ua = np.array([a[t == x].mean() for x in ut])
    return ut, ua


def curve_distance(c1: TradeoffCurve, c2: TradeoffCurve, grid_points: int = GRID_POINTS) -> float:
    """Max |accuracy difference| at equal time over the shared time range, in points (x100).

    Both curves are linearly interpolated on a uniform grid.
    """
    if len(c1) < 1 or len(c2) < 1:
        raise ValueError("curves must be non-empty")
    lo = max(c1.t_min, c2.t_min)
    hi = min(c1.t_max, c2.t_max)
    if lo > hi:
        raise ValueError(f"curves do not overlap in time ([{c1.t_min}, {c1.t_max}] vs "
                         f"[{c2.t_min}, {c2.t_max}])")
    grid = np.linspace(lo, hi, grid_points)
    t1, a1 = _dedup(c1)
    t2, a2 = _dedup(c2)
    diff = np.abs(np.interp(grid, t1, a1) - np.interp(grid, t2, a2))
    return float(diff.max() * 100.0)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def write_curve_csv(curve: TradeoffCurve, path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_COLUMNS)
        for p in curve.points:
            w.writerow([_fmt(p.threshold), _fmt(p.avg_exit_layer), _fmt(p.time_cost),
                        _fmt(p.wallclock_ms), _fmt(p.accuracy)])
    return path


def read_curve_csv(path: str | os.PathLike) -> TradeoffCurve:
    with Path(path).open(newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: no curve rows")
    missing = set(CURVE_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")

    def opt(v):
        return float(v) if v not in ("", None) else None

    return TradeoffCurve(tuple(
        TradeoffPoint(float(r["mean_macs"]), float(r["accuracy"]), opt(r["threshold"]),
                      opt(r["avg_exit_layer"]), opt(r["wallclock_ms"])) for r in rows))
