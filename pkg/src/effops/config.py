"""Run configuration: one JSON document reused by every pipeline."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .evalbench.measure import DEFAULT_THRESHOLDS
from .evalbench.tasks import SyntheticTask
from .model import CostModel, ModelConfig
from .operators import DistillConfig, PruneConfig, TrainConfig
from .pipeline.execute import OperatorConfigs


@dataclass(frozen=True)
class RunConfig:
    task: SyntheticTask = SyntheticTask()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    prune: PruneConfig = PruneConfig()
    distill: DistillConfig = DistillConfig()
    cost: CostModel = CostModel()
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    seeds: tuple[int, ...] = (1, 2, 3)
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if not self.thresholds:
            raise ValueError("thresholds must be non-empty")
        if self.model.vocab_size < self.task.vocab_size:
            raise ValueError("model vocab smaller than task vocab")
        if self.model.max_len < self.task.max_len:
            raise ValueError("model max_len shorter than task sequences")
        if self.model.n_classes != self.task.n_classes:
            raise ValueError("model and task disagree on n_classes")
        if self.prune.heads_keep_per_layer > self.model.n_heads or \
                self.prune.ff_keep_per_layer > self.model.d_ff:
            raise ValueError("prune keep counts exceed model dimensions")

    @property
    def operators(self) -> OperatorConfigs:
        return OperatorConfigs(self.train, self.distill, self.prune)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        kw = {}
        parts = {"task": SyntheticTask, "model": ModelConfig, "train": TrainConfig,
                 "prune": PruneConfig, "distill": DistillConfig, "cost": CostModel}
        for k, typ in parts.items():
            if k in d:
                sub = dict(d.pop(k))
                if k == "distill" and "loss_weights" in sub:
                    sub["loss_weights"] = tuple(sub["loss_weights"])
                kw[k] = typ(**sub)
        if "thresholds" in d:
            kw["thresholds"] = tuple(float(t) for t in d.pop("thresholds"))
        if "seeds" in d:
            kw["seeds"] = tuple(int(s) for s in d.pop("seeds"))
        if "out_dir" in d:
            kw["out_dir"] = str(d.pop("out_dir"))
        if d:
            raise ValueError(f"unknown config keys: {sorted(d)}")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_task_kind(self, kind: str) -> "RunConfig":
        n_classes = 3 if kind == "majority" else 2
        min_len = max(self.task.min_len, 2 * n_classes + 1) if kind == "majority" else self.task.min_len
        task = replace(self.task, kind=kind, n_classes=n_classes, min_len=min_len)
        return replace(self, task=task, model=replace(self.model, n_classes=n_classes))

    def write(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path


def default_config(**overrides) -> RunConfig:
    return replace(RunConfig(), **overrides) if overrides else RunConfig()

