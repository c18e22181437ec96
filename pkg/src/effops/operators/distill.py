"""Task-specific distillation into a shallower student."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .. import tensor_core as tc
from ..artifact import ModelArtifact
from ..evalbench.tasks import Dataset
from ..model import Hidden, TransformerModel
from ..tensor_core import Tensor
from .train import TrainConfig, train


@dataclass(frozen=True)
class DistillConfig:
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    layer_map_stride: int = 2
    student_depth: int | None = None  # teacher depth / stride when unset

    def __post_init__(self):
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ValueError("loss_weights must be three non-negative reals")
        if self.layer_map_stride < 1:
            raise ValueError("layer_map_stride must be >= 1")

    def depth_for(self, teacher_depth: int) -> int:
        depth = self.student_depth or teacher_depth // self.layer_map_stride
        if depth < 1 or depth * self.layer_map_stride != teacher_depth:
            raise ValueError(f"student depth {depth} x stride {self.layer_map_stride} "
                             f"!= teacher depth {teacher_depth}")
        return depth

    def to_dict(self) -> dict:
        return asdict(self)


def _masked_mse(a: Tensor, b: Tensor, mask: np.ndarray | None) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"hidden shapes differ: {a.shape} vs {b.shape}")
    if mask is None:
        return tc.mse(a, b)
    w = mask.astype(a.data.dtype)[..., None]
    d = (a - b) * w
    return (d * d).sum() * (1.0 / (w.sum() * a.shape[-1]))


def distill_loss(teacher: Hidden, student: Hidden, weights=(1.0, 1.0, 1.0),
                 mask: np.ndarray | None = None,
                 exit_map: list[tuple[int, int]] | None = None) -> Tensor:
    """Soft-CE on logits plus MSE on embedding and final-layer outputs.

    ``exit_map`` pairs (teacher exit, student exit) indices; by default only the
    final logits are matched.  MSE terms average over real (unmasked) tokens.
    """
    w1, w2, w3 = weights
    if exit_map is None:
        exit_map = [(len(teacher.exit_logits) - 1, len(student.exit_logits) - 1)]
    soft = None
    for ti, si in exit_map:
        term = tc.soft_cross_entropy(teacher.exit_logits[ti], student.exit_logits[si])
        soft = term if soft is None else soft + term
    emb = _masked_mse(student.embedding, teacher.embedding, mask)
    fin = _masked_mse(student.layers[-1], teacher.layers[-1], mask)
    return soft * w1 + emb * w2 + fin * w3


def student_exit_map(teacher_depth: int, student_depth: int, teacher_exits: bool) -> list[tuple[int, int]]:
    """Student layer i (1-based) learns from teacher layer stride*i."""
    stride = teacher_depth // student_depth
    if not teacher_exits:
        return [(0, 0)]
    return [(stride * (i + 1) - 1, i) for i in range(student_depth)]


def make_student(teacher: TransformerModel, depth: int) -> TransformerModel:
    """Copy embeddings/classifiers and teacher layer stride*i into student layer i."""
    stride = teacher.n_layers // depth
    p = {}
    for k, v in teacher.params.items():
        if k.startswith("emb.") or k.startswith("cls."):
            p[k] = v
    for i in range(depth):
        src = stride * (i + 1) - 1
        for k, v in teacher.params.items():
            if k.startswith(f"layers.{src}."):
                p[f"layers.{i}." + k.split(".", 2)[2]] = v
        if teacher.has_exits and i < depth - 1:
            p[f"exit.{i}.w"] = teacher.params[f"exit.{src}.w"]
            p[f"exit.{i}.b"] = teacher.params[f"exit.{src}.b"]
    return TransformerModel(teacher.cfg, p, teacher.has_exits).copy()


def distill_train(teacher: TransformerModel, student: TransformerModel, data: Dataset,
                  weights, exit_map: list[tuple[int, int]], tcfg: TrainConfig, tag: str):
    """Train ``student`` against a frozen ``teacher``; returns (student, history)."""
    all_exits = len(exit_map) > 1 or (teacher.has_exits and student.has_exits)

    def loss_fn(model, tok, mask, labels, idx):
        with tc.no_grad():
            t_out = teacher.encode(tok, mask, all_exits=all_exits)
        s_out = model.encode(tok, mask, all_exits=all_exits)
        return distill_loss(t_out, s_out, weights, mask, exit_map)

    return train(student, data, tcfg, loss_fn, tag)


def apply_distill(teacher: ModelArtifact, data: Dataset, dcfg: DistillConfig = DistillConfig(),
                  tcfg: TrainConfig = TrainConfig()) -> ModelArtifact:
    if teacher.model.quantized:
        raise ValueError("cannot distill from a quantized model")
    t = teacher.model
    depth = dcfg.depth_for(t.n_layers)
    student = make_student(t, depth)
    emap = student_exit_map(t.n_layers, depth, t.has_exits)
    new = teacher.extended("D")
    student, hist = distill_train(t, student, data, dcfg.loss_weights, emap, tcfg,
                                  tag=new.pipeline)
    new.model = student
    new.configs["D"] = {"distill": dcfg.to_dict(), "train": tcfg.to_dict(), "loss_history": hist}
    return new
