"""Predict composite pipelines from measurements of their individual operators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..evalbench.curves import TradeoffCurve, TradeoffPoint
from ..pipeline.spec import PipelineSpec, parse, validate
from .store import MeasurementStore


class EstimationError(ValueError):
    pass


class MissingMeasurementError(EstimationError):
    def __init__(self, missing: list[str], note: str = ""):
        self.missing = missing
        msg = "missing measurements: " + ", ".join(missing)
        super().__init__(msg + (f" ({note})" if note else ""))


class PQCompoundError(MissingMeasurementError):
    pass


@dataclass(frozen=True)
class EstimatedCurve:
    curve: TradeoffCurve
    provenance: tuple[str, ...] = field(default_factory=tuple)

    @property
    def points(self):
        return self.curve.points


@dataclass(frozen=True)
class EstimatedPoint:
    point: TradeoffPoint
    provenance: tuple[str, ...] = field(default_factory=tuple)


def est_accuracy(a_r: float, a_op: float, a_o: float) -> float:
    """Carry the operator's accuracy ratio relative to O over to pipeline R."""
    if a_o == 0:
        raise EstimationError("baseline accuracy A_O is zero")
    return a_op / a_o * a_r


def est_time(curve_e: TradeoffCurve, t_d_ratio: float | None = None,
             t_p_ratio: float | None = None) -> list[float]:
    """Times of an early-exit curve after adding D and/or P.

    D only shortens the part of the time spent beyond the one-layer exit;
    P scales every point.
    """
    if t_d_ratio is None and t_p_ratio is None:
        raise EstimationError("need at least one of the D or P time ratios")
    if len(curve_e) == 0:
        raise EstimationError("empty early-exit curve")
    for r in (t_d_ratio, t_p_ratio):
        if r is not None and not 0 < r <= 1:
            raise EstimationError(f"time ratio {r} outside (0, 1]")
    t_min = curve_e.t_min
    out = []
    for p in curve_e.points:
        t = p.time_cost
        if t_d_ratio is not None:
            t = t_min + (t - t_min) * t_d_ratio
        if t_p_ratio is not None:
            t = t * t_p_ratio
        out.append(t)
    return out


def est_group2(base: TradeoffPoint, q_saving: float | None = None, l_saving: float | None = None,
               q_acc_ratio: float | None = None, *, base_has_p: bool = False,
               pq_saving: float | None = None, pq_acc_ratio: float | None = None) -> TradeoffPoint:
    """Apply inference-time savings: time x (1-q)(1-l), accuracy x Q's ratio.

    A base containing P takes Q's effect from the PQ compound measurement.
    """
    if q_saving is not None and base_has_p:
        if pq_saving is None:
            raise PQCompoundError(["PQ"], "a pipeline with P needs PQ measured as a compound operator")
        q_saving = pq_saving
        if pq_acc_ratio is not None:
            q_acc_ratio = pq_acc_ratio
    for s in (q_saving, l_saving):
        if s is not None and not 0 <= s < 1:
            raise EstimationError(f"saving {s} outside [0, 1)")
    t = base.time_cost * (1 - (q_saving or 0.0)) * (1 - (l_saving or 0.0))
    acc = base.accuracy
    if q_saving is not None and q_acc_ratio is not None:
        acc = min(1.0, acc * q_acc_ratio)
    return TradeoffPoint(t, acc, base.threshold, base.avg_exit_layer)


def combined_saving(q_saving: float | None, l_saving: float | None) -> float:
    return 1 - (1 - (q_saving or 0.0)) * (1 - (l_saving or 0.0))


def round_percent(fraction: float) -> int:
    """Whole percent, halves rounded up (guarding against binary fuzz)."""
    return int(math.floor(fraction * 100 + 0.5 + 1e-9))


def _point(store, task, seed, pipe, missing) -> TradeoffPoint | None:
    m = store.get(task, seed, pipe)
    if m is None:
        missing.append(pipe)
        return None
    if isinstance(m, TradeoffCurve):
        raise EstimationError(f"record {pipe!r} is a curve, expected a point")
    return m


def _saving(base: TradeoffPoint, with_op: TradeoffPoint) -> float:
    return 1 - with_op.time_cost / base.time_cost


def _group2_lookup(store, task, seed, group1: str, op: str, missing: list[str]):
    """(saving, accuracy ratio, source) of Q or L on top of ``group1``.

    Prefers a record measured on the same base; otherwise the O-based record,
    except that Q on a base with P requires a compound record.
    """
    base_name = group1 or "O"
    own = group1 + op
    if group1 and store.has(task, seed, own) and store.has(task, seed, base_name):
        b, m = store.get(task, seed, base_name), store.get(task, seed, own)
        return _saving(b, m), m.accuracy / b.accuracy, own
    if op == "Q" and "P" in group1:
        if store.has(task, seed, "PQ") and store.has(task, seed, "P"):
            b, m = store.get(task, seed, "P"), store.get(task, seed, "PQ")
            return _saving(b, m), m.accuracy / b.accuracy, "PQ"
        raise PQCompoundError([f"PQ (or {own})"], "Q on a pruned model must be measured as a compound PQ")
    o = _point(store, task, seed, "O", missing)
    m = _point(store, task, seed, op, missing)
    if o is None or m is None:
        return None
    return _saving(o, m), m.accuracy / o.accuracy, op


def estimate_pipeline(store: MeasurementStore, target: PipelineSpec | str, task: str,
                      seed: int) -> EstimatedCurve | EstimatedPoint:
    """Estimate ``target`` from O and single-operator records.

    Early-exit targets come back as a curve built from the E curve; others as a
    point.  Missing records are reported all at once.
    """
    spec = parse(target) if isinstance(target, str) else target
    problems = validate(spec)
    if problems:
        raise EstimationError(f"invalid target {spec.to_string()}: " + "; ".join(problems))
    ops = spec.ops
    group1 = "".join(o for o in ops if o in "DPE")
    group2 = [o for o in ops if o in "LQ"]
    missing: list[str] = []
    prov: list[str] = []

    if not ops:
        p = _point(store, task, seed, "O", missing)
        if missing:
            raise MissingMeasurementError(missing)
        return EstimatedPoint(p, ("measured O",))

    o = _point(store, task, seed, "O", missing)
    ratios = {}
    for op in (x for x in group1 if x in "DP"):
        m = _point(store, task, seed, op, missing)
        if m is not None and o is not None:
            ratios[op] = m
    curve_e = None
    if "E" in group1:
        curve_e = store.get(task, seed, "E")
        if curve_e is None:
            missing.append("E (curve)")
        elif not isinstance(curve_e, TradeoffCurve):
            raise EstimationError("record 'E' must be a curve")

    base_measured = None
    if "E" not in group1 and group1 and store.has(task, seed, group1):
        base_measured = store.get(task, seed, group1)

    q_info = l_info = None
    for op in group2:
        info = _group2_lookup(store, task, seed, group1, op, missing)
        if op == "Q":
            q_info = info
        else:
            l_info = info
    if missing:
        raise MissingMeasurementError(sorted(set(missing)))

    def g2(pt: TradeoffPoint) -> TradeoffPoint:
        if not group2:
            return pt
        return est_group2(pt, q_info[0] if q_info else None, l_info[0] if l_info else None,
                          q_info[1] if q_info else None)

    if q_info:
        prov.append(f"Q saving/accuracy ratio from {q_info[2]}")
    if l_info:
        prov.append(f"L saving from {l_info[2]} (accuracy unchanged)")

    if curve_e is not None:
        acc_factor = 1.0
        for op, m in ratios.items():
            acc_factor = est_accuracy(acc_factor, m.accuracy, o.accuracy)
        d_ratio = ratios["D"].time_cost / o.time_cost if "D" in ratios else None
        p_ratio = ratios["P"].time_cost / o.time_cost if "P" in ratios else None
        if ratios:
            times = est_time(curve_e, d_ratio, p_ratio)
            prov.insert(0, "accuracy x " + " x ".join(f"A_{k}/A_O" for k in ratios))
            if d_ratio is not None:
                prov.insert(1, "time: t_min + (T_E - t_min) x T_D/T_O")
            if p_ratio is not None:
                prov.insert(1 + (d_ratio is not None), "time x T_P/T_O")
        else:
            times = [p.time_cost for p in curve_e.points]
            prov.insert(0, "measured E curve")
        pts = []
        for p, t in zip(curve_e.points, times):
            pt = TradeoffPoint(t, min(1.0, p.accuracy * acc_factor), p.threshold, p.avg_exit_layer)
            pts.append(g2(pt))
        return EstimatedCurve(TradeoffCurve(tuple(pts)), tuple(prov))

    if base_measured is not None:
        base = base_measured
        prov.insert(0, f"measured {group1}")
    elif not group1:
        base = o
        prov.insert(0, "measured O")
    else:
        acc, t = o.accuracy, o.time_cost
        for op, m in ratios.items():
            acc = est_accuracy(acc, m.accuracy, o.accuracy)
            t = t * m.time_cost / o.time_cost
        base = TradeoffPoint(t, min(1.0, acc))
        prov.insert(0, "accuracy and time ratios of " + ", ".join(ratios) + " vs O")
    return EstimatedPoint(g2(base), tuple(prov))
