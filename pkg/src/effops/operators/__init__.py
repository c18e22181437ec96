"""The efficiency operators D, P, E, L, Q plus base fine-tuning."""
from __future__ import annotations

from .. import tensor_core as tc
from ..artifact import ModelArtifact
from ..evalbench.tasks import Dataset
from ..model import ModelConfig, init_model
from .distill import DistillConfig, apply_distill, distill_loss
from .exits import apply_early_exit, exit_sum_loss
from .prune import ImportanceScores, PruneConfig, apply_prune, compute_importance, prune_model
from .quantize import apply_dynamic_length, apply_quantize, quantize_model
from .train import Adam, TrainConfig, train


def finetune(cfg: ModelConfig, data: Dataset, tcfg: TrainConfig, task_id: str = "") -> ModelArtifact:
    """Train the "O" model from a seeded initialization with plain cross-entropy."""
    model = init_model(cfg, tcfg.seed)

    def loss_fn(m, tok, mask, labels, idx):
        return tc.cross_entropy(m.encode(tok, mask).exit_logits[-1], labels)

    model, hist = train(model, data, tcfg, loss_fn, tag="O")
    return ModelArtifact(model, "O", tcfg.seed, task_id,
                         {"O": {"model": cfg.to_dict(), "train": tcfg.to_dict(), "loss_history": hist}})


__all__ = [
    "Adam", "DistillConfig", "ImportanceScores", "PruneConfig", "TrainConfig",
    "apply_distill", "apply_dynamic_length", "apply_early_exit", "apply_prune",
    "apply_quantize", "compute_importance", "distill_loss", "exit_sum_loss",
    "finetune", "prune_model", "quantize_model", "train",
]
