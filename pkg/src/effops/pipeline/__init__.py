from ..artifact import ModelArtifact
from .checkpoint import CheckpointError, load, save
from .execute import MissingBaseError, OperatorConfigs, PipelineError, Registry, execute
from .spec import PipelineParseError, PipelineSpec, is_valid, parse, validate

__all__ = [
    "CheckpointError", "MissingBaseError", "ModelArtifact", "OperatorConfigs", "PipelineError",
    "PipelineParseError", "PipelineSpec", "Registry", "execute", "is_valid", "load", "parse",
    "save", "validate",
]
