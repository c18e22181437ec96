"""Model artifact: a model plus the provenance of how it was produced."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import TransformerModel


@dataclass
class ModelArtifact:
    model: TransformerModel
    pipeline: str = "O"  # operators applied so far, "O" when none
    seed: int = 0
    task_id: str = ""
    configs: dict = field(default_factory=dict)
    l_flag: bool = False

    @property
    def ops(self) -> str:
        return "" if self.pipeline == "O" else self.pipeline

    def extended(self, letter: str, model: TransformerModel | None = None, **changes) -> "ModelArtifact":
        return replace(self, model=model if model is not None else self.model,
                       pipeline=self.ops + letter, configs=dict(self.configs), **changes)
