"""First-order head/FFN importance and structured pruning with rewiring."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .. import tensor_core as tc
from ..artifact import ModelArtifact
from ..evalbench.tasks import Dataset, iter_batches
from ..model import TransformerModel
from ..tensor_core import Tensor
from .distill import DistillConfig, distill_train
from .train import TrainConfig


@dataclass(frozen=True)
class PruneConfig:
    heads_keep_per_layer: int = 3  # 2/3 of 4 heads, rounded up
    ff_keep_per_layer: int = 32  # 1/2 of 64

    def __post_init__(self):
        if self.heads_keep_per_layer < 1 or self.ff_keep_per_layer < 1:
            raise ValueError("keep counts must be >= 1")

    @classmethod
    def from_ratios(cls, n_heads: int, d_ff: int, heads_ratio=2 / 3, ff_ratio=0.5) -> "PruneConfig":
        return cls(max(1, math.ceil(n_heads * heads_ratio - 1e-9)),
                   max(1, math.ceil(d_ff * ff_ratio - 1e-9)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ImportanceScores:
    heads: list[np.ndarray]  # per layer, one score per kept head
    ff: list[np.ndarray]  # per layer, one score per kept FFN unit

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([h, f]) for h, f in zip(self.heads, self.ff)])


def unit_gates(model: TransformerModel, batch: int, dtype, requires_grad: bool) -> dict:
    """Per-example multiplicative gates, all ones, shaped (batch, units)."""
    n = model.n_layers
    return {
        "heads": [Tensor(np.ones((batch, model.heads_kept(i)), dtype), requires_grad=requires_grad)
                  for i in range(n)],
        "ff": [Tensor(np.ones((batch, model.ff_kept(i)), dtype), requires_grad=requires_grad)
               for i in range(n)],
    }


def example_losses(model: TransformerModel, tok, mask, labels, gates: dict | None) -> Tensor:
    """Per-example cross-entropy of the final classifier, summed over the batch."""
    h = model.encode(tok, mask, gates=gates, all_exits=False)
    logp = tc.log_softmax(h.exit_logits[-1], axis=-1)
    return tc.neg(tc.tsum(logp[np.arange(len(labels)), labels]))


def compute_importance(model: TransformerModel, dev: Dataset) -> ImportanceScores:
    """Sum over dev examples of |d loss / d gate| for every head and FFN unit.

    Each example is run on its own so its gradient never depends on batch
    composition; sums use ``math.fsum`` which makes them order independent.
    """
    if len(dev) == 0:
        raise ValueError("empty dev set")
    if model.quantized:
        raise ValueError("importance needs a float model")
    n = model.n_layers
    dtype = model.params["emb.tok"].data.dtype
    per_head = [[] for _ in range(n)]
    per_ff = [[] for _ in range(n)]
    for tok, mask, labels, _ in iter_batches(dev, 1, dynamic_length=True):
        gates = unit_gates(model, 1, dtype, True)
        loss = example_losses(model, tok, mask, labels, gates)
        tc.backward(loss)
        for i in range(n):
            per_head[i].append(np.abs(gates["heads"][i].grad[0]).astype(np.float64))
            per_ff[i].append(np.abs(gates["ff"][i].grad[0]).astype(np.float64))

    def fsum_cols(rows):
        m = np.stack(rows)
        return np.array([math.fsum(m[:, j]) for j in range(m.shape[1])])

    return ImportanceScores([fsum_cols(r) for r in per_head], [fsum_cols(r) for r in per_ff])


def top_units(scores: np.ndarray, keep: int) -> np.ndarray:
    """Indices of the ``keep`` highest scores, ties to the lower index, ascending."""
    if keep > len(scores):
        raise ValueError(f"cannot keep {keep} of {len(scores)} units")
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return np.sort(np.array(order[:keep], dtype=np.int64))


def prune_model(model: TransformerModel, scores: ImportanceScores, pcfg: PruneConfig) -> TransformerModel:
    """Remove low-importance heads/units and rewire into a smaller dense model."""
    m = model.copy()
    dh = m.cfg.d_head
    for i in range(m.n_layers):
        if pcfg.heads_keep_per_layer > m.heads_kept(i) or pcfg.ff_keep_per_layer > m.ff_kept(i):
            raise ValueError(f"layer {i}: keep counts exceed available units "
                             f"({m.heads_kept(i)} heads, {m.ff_kept(i)} ffn)")
        if len(scores.heads[i]) != m.heads_kept(i) or len(scores.ff[i]) != m.ff_kept(i):
            raise ValueError(f"layer {i}: importance scores do not match the model")
        heads = top_units(scores.heads[i], pcfg.heads_keep_per_layer)
        rows = (heads[:, None] * dh + np.arange(dh)[None, :]).reshape(-1)
        units = top_units(scores.ff[i], pcfg.ff_keep_per_layer)
        p = f"layers.{i}."
        P = m.params
        for t in "qkv":
            P[p + "w" + t] = Tensor(P[p + "w" + t].data[rows].copy())
            P[p + "b" + t] = Tensor(P[p + "b" + t].data[rows].copy())
        P[p + "wo"] = Tensor(P[p + "wo"].data[:, rows].copy())
        P[p + "w1"] = Tensor(P[p + "w1"].data[units].copy())
        P[p + "b1"] = Tensor(P[p + "b1"].data[units].copy())
        P[p + "w2"] = Tensor(P[p + "w2"].data[:, units].copy())
    return m


def apply_prune(artifact: ModelArtifact, scores: ImportanceScores | None, pcfg: PruneConfig,
                data: Dataset, tcfg: TrainConfig = TrainConfig(),
                dev: Dataset | None = None,
                loss_weights=DistillConfig().loss_weights) -> ModelArtifact:
    """Prune then distill from the unpruned model (layer i supervises layer i).

    ``scores`` may be None, in which case importance is computed on ``dev``.
    Keeping every unit returns the input model untouched.
    """
    model = artifact.model
    if model.quantized:
        raise ValueError("cannot prune a quantized model")
    new = artifact.extended("P")
    identity = all(pcfg.heads_keep_per_layer == model.heads_kept(i)
                   and pcfg.ff_keep_per_layer == model.ff_kept(i) for i in range(model.n_layers))
    new.configs["P"] = {"prune": pcfg.to_dict(), "train": tcfg.to_dict()}
    if identity:
        new.model = model.copy()
        new.configs["P"]["identity"] = True
        return new
    if scores is None:
        if dev is None:
            raise ValueError("need importance scores or a dev set")
        scores = compute_importance(model, dev)
    pruned = prune_model(model, scores, pcfg)
    n = model.n_layers
    emap = [(i, i) for i in range(n)] if model.has_exits else [(0, 0)]
    pruned, hist = distill_train(model, pruned, data, loss_weights, emap, tcfg, tag=new.pipeline)
    new.model = pruned
    new.configs["P"]["loss_history"] = hist
    return new
