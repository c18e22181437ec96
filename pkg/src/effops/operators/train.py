"""Minibatch training loop shared by every training operator."""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np

from .. import tensor_core as tc
from ..evalbench.tasks import Dataset, iter_batches
from ..model import TransformerModel
from ..tensor_core import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0 or self.seed < 0:
            raise ValueError(f"invalid TrainConfig {self}")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: list[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)
            p.grad = None


def stream_seed(seed: int, tag: str) -> np.random.Generator:
    """RNG keyed by (seed, tag) so results never depend on call history."""
    return np.random.default_rng([seed, zlib.crc32(tag.encode())])


LossFn = Callable[[TransformerModel, np.ndarray, np.ndarray, np.ndarray, np.ndarray], Tensor]


def train(model: TransformerModel, data: Dataset, tcfg: TrainConfig, loss_fn: LossFn,
          tag: str) -> tuple[TransformerModel, list[float]]:
    """Train a copy of ``model``; returns it and the per-epoch mean loss."""
    model = model.copy().requires_grad_(True)
    opt = Adam(model.trainable(), tcfg.learning_rate)
    rng = stream_seed(tcfg.seed, tag)
    history = []
    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(data))
        total, n = 0.0, 0
        for tok, mask, labels, idx in iter_batches(data, tcfg.batch_size, True, order):
            loss = loss_fn(model, tok, mask, labels, idx)
            tc.backward(loss)
            opt.step()
            total += float(loss.data) * len(labels)
            n += len(labels)
        history.append(total / n)
        if not np.isfinite(history[-1]):
            raise FloatingPointError(f"non-finite training loss in {tag} epoch {epoch}")
        log.debug("%s epoch %d loss %.4f", tag, epoch, history[-1])
    return model.requires_grad_(False), history
