"""Registry of artifacts keyed by (task, seed, pipeline) and cached execution."""
from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..artifact import ModelArtifact
from ..evalbench.tasks import Splits
from ..operators import (DistillConfig, PruneConfig, TrainConfig, apply_distill,
                         apply_dynamic_length, apply_early_exit, apply_prune, apply_quantize)
from . import checkpoint
from .spec import EMPTY, PipelineSpec, parse, validate

log = logging.getLogger(__name__)

REGISTRY_ENV = "EFFOPS_REGISTRY"


class PipelineError(RuntimeError):
    pass


class MissingBaseError(PipelineError):
    pass


@dataclass(frozen=True)
class OperatorConfigs:
    train: TrainConfig = TrainConfig()
    distill: DistillConfig = DistillConfig()
    prune: PruneConfig = PruneConfig()


@dataclass
class Registry:
    """Checkpoints under ``<root>/<task>/<seed>/<pipeline>/``.

    Writes go through a lock so one process never writes a key twice.
    """

    root: Path
    hits: int = 0
    misses: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.root = Path(self.root)

    @classmethod
    def from_env(cls, default: str | os.PathLike = "registry") -> "Registry":
        return cls(Path(os.environ.get(REGISTRY_ENV, default)))

    def path(self, task: str, seed: int, pipeline: str) -> Path:
        return self.root / task / str(seed) / pipeline

    def has(self, task: str, seed: int, pipeline: str) -> bool:
        return (self.path(task, seed, pipeline) / checkpoint.MANIFEST).exists()

    def get(self, task: str, seed: int, pipeline: str) -> ModelArtifact | None:
        if not self.has(task, seed, pipeline):
            return None
        return checkpoint.load(self.path(task, seed, pipeline))

    def put(self, artifact: ModelArtifact) -> Path:
        with self._lock:
            p = self.path(artifact.task_id, artifact.seed, artifact.pipeline)
            if (p / checkpoint.MANIFEST).exists():
                return p
            return checkpoint.save(artifact, p)


def _normalize(artifact: ModelArtifact) -> ModelArtifact:
    return replace(artifact, configs=json.loads(json.dumps(artifact.configs)))


def apply_operator(op: str, artifact: ModelArtifact, data: Splits, cfgs: OperatorConfigs) -> ModelArtifact:
    tcfg = replace(cfgs.train, seed=artifact.seed)
    if op == "D":
        out = apply_distill(artifact, data.train, cfgs.distill, tcfg)
    elif op == "P":
        # importance is recomputed on the current artifact every time
        out = apply_prune(artifact, None, cfgs.prune, data.train, tcfg, dev=data.dev,
                          loss_weights=cfgs.distill.loss_weights)
    elif op == "E":
        out = apply_early_exit(artifact, data.train, tcfg)
    elif op == "L":
        out = apply_dynamic_length(artifact)
    elif op == "Q":
        out = apply_quantize(artifact)
    else:
        raise PipelineError(f"unknown operator {op!r}")
    return _normalize(out)


def execute(spec: PipelineSpec | str, base: ModelArtifact | None, data: Splits,
            cfgs: OperatorConfigs = OperatorConfigs(), registry: Registry | None = None) -> ModelArtifact:
    """Apply ``spec`` left to right on top of ``base``, reusing cached prefixes."""
    if isinstance(spec, str):
        spec = parse(spec)
    problems = validate(spec)
    if problems:
        raise PipelineError(f"invalid pipeline {spec.to_string()}: " + "; ".join(problems))
    if base is None:
        raise MissingBaseError("no base 'O' artifact")
    if base.pipeline != EMPTY:
        raise PipelineError(f"base artifact must be 'O', got {base.pipeline!r}")
    if registry is not None:
        registry.put(base)
    current = base
    start = 0
    if registry is not None:
        for k in range(len(spec.ops), 0, -1):
            cached = registry.get(base.task_id, base.seed, "".join(spec.ops[:k]))
            if cached is not None:
                current, start = cached, k
                registry.hits += 1
                break
    for pos in range(start, len(spec.ops)):
        op = spec.ops[pos]
        log.info("applying %s at position %d (have %s)", op, pos, current.pipeline)
        try:
            current = apply_operator(op, current, data, cfgs)
        except Exception as e:
            raise PipelineError(f"operator {op} at position {pos} of "
                                f"{spec.to_string()} failed: {e}") from e
        if registry is not None:
            registry.misses += 1
            registry.put(current)
    return current
