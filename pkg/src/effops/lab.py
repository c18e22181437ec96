"""End-to-end workflow: data, base model, cached pipelines, measurements."""
from __future__ import annotations

import functools
import logging
from dataclasses import replace
from pathlib import Path

from .artifact import ModelArtifact
from .config import RunConfig
from .estimator import MeasurementStore
from .evalbench import (Splits, TradeoffCurve, TradeoffPoint, gen_task, measure_curve,
                        measure_point)
from .operators import finetune
from .pipeline import Registry, execute, parse

log = logging.getLogger(__name__)


class Lab:
    """Binds a RunConfig to a registry so pipelines are trained at most once."""

    def __init__(self, cfg: RunConfig, registry: Registry | None = None):
        self.cfg = cfg
        self.registry = registry or Registry(Path(cfg.out_dir) / "registry")

    @functools.cached_property
    def data(self) -> Splits:
        return gen_task(self.cfg.task)

    @property
    def task_id(self) -> str:
        return self.cfg.task.task_id

    def base(self, seed: int) -> ModelArtifact:
        cached = self.registry.get(self.task_id, seed, "O")
        if cached is not None:
            return cached
        log.info("fine-tuning base model for %s seed %d", self.task_id, seed)
        art = finetune(self.cfg.model, self.data.train, replace(self.cfg.train, seed=seed),
                       self.task_id)
        self.registry.put(art)
        return self.registry.get(self.task_id, seed, "O")

    def artifact(self, pipeline: str, seed: int) -> ModelArtifact:
        spec = parse(pipeline)
        if not spec.ops:
            return self.base(seed)
        cached = self.registry.get(self.task_id, seed, spec.to_string())
        if cached is not None:
            return cached
        return execute(spec, self.base(seed), self.data, self.cfg.operators, self.registry)

    def measure(self, pipeline: str, seed: int) -> TradeoffPoint | TradeoffCurve:
        art = self.artifact(pipeline, seed)
        if art.model.has_exits:
            return measure_curve(art, self.data.test, self.cfg.thresholds, cost=self.cfg.cost)
        return measure_point(art, self.data.test, cost=self.cfg.cost)

    def curve(self, pipeline: str, seed: int) -> TradeoffCurve:
        m = self.measure(pipeline, seed)
        if not isinstance(m, TradeoffCurve):
            raise ValueError(f"pipeline {pipeline} has no early exits, so no curve")
        return m

    def record(self, store: MeasurementStore, pipeline: str, seed: int):
        m = self.measure(pipeline, seed)
        store.put(self.task_id, seed, parse(pipeline).to_string(), m)
        return m
