"""Synthetic tasks, measurement, tradeoff curves and commutativity statistics."""
from .commute import CommuteReport, DistanceStats, commutativity_report, valid_orderings, write_report_csv
from .curves import TradeoffCurve, TradeoffPoint, curve_distance, read_curve_csv, write_curve_csv
from .measure import DEFAULT_THRESHOLDS, measure_curve, measure_point, predict
from .tasks import Dataset, Splits, SyntheticTask, gen_task, iter_batches, label_of

__all__ = [
    "CommuteReport", "DEFAULT_THRESHOLDS", "Dataset", "DistanceStats", "Splits", "SyntheticTask",
    "TradeoffCurve", "TradeoffPoint", "commutativity_report", "curve_distance", "gen_task",
    "iter_batches", "label_of", "measure_curve", "measure_point", "predict", "read_curve_csv",
    "valid_orderings", "write_curve_csv", "write_report_csv",
]
