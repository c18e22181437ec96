"""Same-order vs different-order curve distances."""
from __future__ import annotations

import csv
import itertools
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..pipeline.spec import is_valid
from .curves import TradeoffCurve, curve_distance

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("dataset", "operator_set", "group", "mean", "sd", "n_pairs", "overlap_1sd")
SAME, DIFF = "same-order", "different-order"


@dataclass(frozen=True)
class DistanceStats:
    mean: float
    sd: float
    n_pairs: int
    group: str

    @classmethod
    def of(cls, distances: list[float], group: str) -> "DistanceStats":
        if not distances:
            raise ValueError(f"no {group} pairs")
        d = np.asarray(distances, dtype=float)
        sd = float(d.std(ddof=1)) if len(d) > 1 else 0.0
        return cls(float(d.mean()), sd, len(d), group)


@dataclass(frozen=True)
class CommuteReport:
    dataset: str
    operator_set: str
    same: DistanceStats
    diff: DistanceStats
    orderings: tuple[str, ...]

    @property
    def overlap_1sd(self) -> bool:
        return abs(self.same.mean - self.diff.mean) <= self.same.sd + self.diff.sd

    def rows(self) -> list[dict]:
        return [{"dataset": self.dataset, "operator_set": self.operator_set, "group": s.group,
                 "mean": s.mean, "sd": s.sd, "n_pairs": s.n_pairs, "overlap_1sd": self.overlap_1sd}
                for s in (self.same, self.diff)]


def valid_orderings(operator_set: Iterable[str]) -> list[str]:
    ops = sorted(set(operator_set))
    return sorted({"".join(p) for p in itertools.permutations(ops) if is_valid("".join(p))})


def commutativity_report(operator_set: str, seeds: list[int],
                         curve_for: Callable[[str, int], TradeoffCurve],
                         dataset: str = "") -> CommuteReport:
    """Distances between every pair of (ordering, seed) curves, grouped by ordering."""
    ops = set(operator_set)
    if "E" not in ops:
        raise ValueError("operator set must contain E: only early-exit pipelines have curves")
    if not ops <= set("DPE"):
        raise ValueError("commutativity is studied over training operators D, P, E")
    if len(set(seeds)) < 2:
        raise ValueError("need at least two distinct seeds")
    orders = valid_orderings(ops)
    curves = {(o, s): curve_for(o, s) for o in orders for s in seeds}
    keys = list(curves)
    same, diff = [], []
    for a, b in itertools.combinations(keys, 2):
        d = curve_distance(curves[a], curves[b])
        (same if a[0] == b[0] else diff).append(d)
    report = CommuteReport(dataset, "+".join(sorted(ops, key="DPE".index)),
                           DistanceStats.of(same, SAME), DistanceStats.of(diff, DIFF), tuple(orders))
    if not report.overlap_1sd:
        log.warning("1-SD intervals of same/different orders do not overlap for %s",
                    report.operator_set)
    return report


def write_report_csv(reports: list[CommuteReport], path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerows(r.rows())
    return path
