"""Early-exit classifiers trained on the sum of per-layer losses."""
from __future__ import annotations

from .. import tensor_core as tc
from ..artifact import ModelArtifact
from ..evalbench.tasks import Dataset
from ..model import add_exit_classifiers
from .train import TrainConfig, stream_seed, train


def exit_sum_loss(model, tok, mask, labels, idx=None):
    h = model.encode(tok, mask)
    loss = None
    for logits in h.exit_logits:
        term = tc.cross_entropy(logits, labels)
        loss = term if loss is None else loss + term
    return loss


def apply_early_exit(artifact: ModelArtifact, data: Dataset, tcfg: TrainConfig = TrainConfig()) -> ModelArtifact:
    if artifact.model.has_exits:
        raise ValueError("model already has exit classifiers")
    if artifact.model.quantized:
        raise ValueError("cannot train exits on a quantized model")
    new = artifact.extended("E")
    init_seed = int(stream_seed(tcfg.seed, new.pipeline + "/init").integers(2**31))
    model = add_exit_classifiers(artifact.model, init_seed)
    model, hist = train(model, data, tcfg, exit_sum_loss, tag=new.pipeline)
    new.model = model
    new.configs["E"] = {"train": tcfg.to_dict(), "loss_history": hist}
    return new
