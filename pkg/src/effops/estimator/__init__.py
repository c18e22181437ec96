"""Cumulativeness estimation of pipeline accuracy and time."""
from .estimate import (EstimatedCurve, EstimatedPoint, EstimationError, MissingMeasurementError,
                       PQCompoundError, combined_saving, est_accuracy, est_group2, est_time,
                       estimate_pipeline, round_percent)
from .store import MeasurementStore

__all__ = [
    "EstimatedCurve", "EstimatedPoint", "EstimationError", "MeasurementStore",
    "MissingMeasurementError", "PQCompoundError", "combined_saving", "est_accuracy",
    "est_group2", "est_time", "estimate_pipeline", "round_percent",
]
