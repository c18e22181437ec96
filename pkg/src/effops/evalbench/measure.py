"""Batched accuracy/cost measurement of artifacts."""
from __future__ import annotations

import numpy as np

from ..artifact import ModelArtifact
from ..model import CostModel, forward
from .curves import TradeoffCurve, TradeoffPoint
from .tasks import Dataset, iter_batches

DEFAULT_THRESHOLDS = (0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.01)
EVAL_BATCH = 8


def predict(artifact: ModelArtifact, data: Dataset, batch_size: int = EVAL_BATCH,
            threshold: float | None = None, dynamic_length: bool | None = None,
            cost: CostModel = CostModel(), timed: bool = False) -> dict:
    """Logits, exit layers and per-example MACs over ``data`` in order.

    ``dynamic_length`` defaults to the artifact's L flag.
    """
    if len(data) == 0:
        raise ValueError("empty evaluation set")
    dyn = artifact.l_flag if dynamic_length is None else dynamic_length
    logits, exits, macs = [], [], []
    wall = 0
    for tok, mask, _, _ in iter_batches(data, batch_size, dyn):
        out = forward(artifact.model, tok, mask, threshold, cost, timed=timed)
        logits.append(out.logits)
        exits.append(out.exit_layers)
        macs.append(out.per_example_macs)
        wall += out.wall_ns or 0
    return {"logits": np.concatenate(logits), "exit_layers": np.concatenate(exits),
            "macs": np.concatenate(macs), "wall_ns": wall}


def measure_point(artifact: ModelArtifact, test: Dataset, batch_size: int = EVAL_BATCH,
                  threshold: float | None = None, cost: CostModel = CostModel(),
                  dynamic_length: bool | None = None) -> TradeoffPoint:
    if artifact.model.has_exits and threshold is None:
        raise ValueError("early-exit artifacts are measured at a fixed threshold")
    r = predict(artifact, test, batch_size, threshold, dynamic_length, cost, timed=True)
    acc = float(np.mean(r["logits"].argmax(-1) == test.labels))
    return TradeoffPoint(float(r["macs"].mean()), acc, threshold,
                         float(r["exit_layers"].mean()), r["wall_ns"] / 1e6 / len(test))


def measure_curve(artifact: ModelArtifact, test: Dataset, thresholds=DEFAULT_THRESHOLDS,
                  batch_size: int = EVAL_BATCH, cost: CostModel = CostModel()) -> TradeoffCurve:
    if not artifact.model.has_exits:
        raise ValueError("tradeoff curves need an artifact with exit classifiers")
    if len(thresholds) == 0:
        raise ValueError("no thresholds given")
    return TradeoffCurve(tuple(measure_point(artifact, test, batch_size, float(t), cost)
                               for t in thresholds))
