"""Post-training symmetric int8 quantization of attention and FFN weights."""
from __future__ import annotations

from .. import tensor_core as tc
from ..artifact import ModelArtifact

QUANTIZED_WEIGHTS = ("wq", "wk", "wv", "wo", "w1", "w2")


def quantize_model(model):
    if model.quantized:
        raise ValueError("model is already quantized")
    m = model.copy()
    for i in range(m.n_layers):
        for w in QUANTIZED_WEIGHTS:
            key = f"layers.{i}.{w}"
            m.params[key] = tc.quantize(m.params[key])
    return m


def apply_quantize(artifact: ModelArtifact) -> ModelArtifact:
    """Embeddings, layer norms, biases and classifiers stay float."""
    new = artifact.extended("Q", quantize_model(artifact.model))
    new.configs["Q"] = {"weights": list(QUANTIZED_WEIGHTS), "activations": "dynamic per-tensor"}
    return new


def apply_dynamic_length(artifact: ModelArtifact) -> ModelArtifact:
    """L only changes how batches are padded at measurement time."""
    if artifact.l_flag:
        raise ValueError("dynamic length already enabled")
    return artifact.extended("L", l_flag=True)
