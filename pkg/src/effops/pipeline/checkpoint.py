"""Checkpoint directory: ``manifest.json`` plus a little-endian ``weights.bin``."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from ..artifact import ModelArtifact
from ..model import ModelConfig, TransformerModel
from ..tensor_core import QuantizedTensor, Tensor

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"


class CheckpointError(RuntimeError):
    pass


def save(artifact: ModelArtifact, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = []
    blobs = []
    offset = 0
    for name in sorted(artifact.model.params):
        v = artifact.model.params[name]
        if isinstance(v, QuantizedTensor):
            arr = np.ascontiguousarray(v.qdata, dtype="<i1")
            entry = {"name": name, "shape": list(arr.shape), "dtype": "int8",
                     "scale": v.scale, "zero_point": v.zero_point}
        else:
            arr = np.ascontiguousarray(v.data, dtype=v.data.dtype.newbyteorder("<"))
            entry = {"name": name, "shape": list(arr.shape), "dtype": arr.dtype.name}
        raw = arr.tobytes()
        entry.update(offset=offset, nbytes=len(raw))
        offset += len(raw)
        index.append(entry)
        blobs.append(raw)
    data = b"".join(blobs)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": artifact.model.cfg.to_dict(),
        "has_exits": artifact.model.has_exits,
        "provenance": {"pipeline": artifact.pipeline, "seed": artifact.seed,
                       "task_id": artifact.task_id, "configs": artifact.configs,
                       "l_flag": artifact.l_flag},
        "weights_sha256": hashlib.sha256(data).hexdigest(),
        "weights_nbytes": len(data),
        "tensors": index,
    }
    tmp = path / (WEIGHTS + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path / WEIGHTS)
    tmp = path / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, path / MANIFEST)
    return path


def load(path: str | os.PathLike) -> ModelArtifact:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError as e:
        raise CheckpointError(f"no manifest in {path}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt manifest in {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint version {manifest.get('format_version')!r}, "
                              f"expected {FORMAT_VERSION}")
    data = (path / WEIGHTS).read_bytes()
    if len(data) != manifest["weights_nbytes"]:
        raise CheckpointError(f"weights file has {len(data)} bytes, manifest says "
                              f"{manifest['weights_nbytes']}")
    if hashlib.sha256(data).hexdigest() != manifest["weights_sha256"]:
        raise CheckpointError("weights checksum mismatch")
    params = {}
    expected = 0
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        dtype = np.dtype(e["dtype"]).newbyteorder("<")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if e["offset"] != expected or e["nbytes"] != nbytes:
            raise CheckpointError(f"tensor {e['name']}: offset/size mismatch")
        arr = np.frombuffer(data, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=e["offset"]).reshape(shape)
        arr = arr.astype(dtype.newbyteorder("="))
        expected += nbytes
        if e["dtype"] == "int8":
            params[e["name"]] = QuantizedTensor(arr, float(e["scale"]), int(e.get("zero_point", 0)))
        else:
            params[e["name"]] = Tensor(arr)
    if expected != len(data):
        raise CheckpointError("trailing bytes in weights file")
    prov = manifest["provenance"]
    model = TransformerModel(ModelConfig(**manifest["config"]), params, manifest["has_exits"])
    return ModelArtifact(model, prov["pipeline"], prov["seed"], prov["task_id"],
                         prov["configs"], prov["l_flag"])
