"""Self-describing binary checkpoints.

Layout: the magic ``RGCNCKPT``, a little-endian uint64 header length, a
UTF-8 JSON header, then every tensor as raw little-endian float64 in the
order listed in the header.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import IngestionError

__all__ = ["save_checkpoint", "read_checkpoint", "load_model"]

MAGIC = b"RGCNCKPT"
VERSION = 1


def save_checkpoint(path, model, layer_kind: str, seed, config: dict | None = None, extra: dict | None = None) -> Path:
    state = model.state_dict()
    tensors = []
    offset = 0
    for name, arr in state.items():
        nbytes = int(np.asarray(arr).size * 8)
        tensors.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format_version": VERSION,
        "dtype": "<f8",
        "layer_kind": layer_kind,
        "seed": seed,
        "model": type(model).__name__,
        "config": config or {},
        "tensors": tensors,
    }
    if extra:
        header["extra"] = extra
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for arr in state.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(header, state)``."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise IngestionError(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    body = memoryview(blob)[16 + hlen:]
    state = {}
    for t in header["tensors"]:
        chunk = body[t["offset"]:t["offset"] + t["nbytes"]]
        if len(chunk) != t["nbytes"]:
            raise IngestionError(f"{path}: truncated tensor {t['name']}")
        state[t["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(t["shape"]).astype(np.float64)
    return header, state


def load_model(path):
    """Rebuild a classifier or generator from a checkpoint."""
    from .classify import ClassifierConfig, GraphClassifier
    from .generate import GeneratorConfig, GeneratorModel

    header, state = read_checkpoint(path)
    if header["model"] == "GraphClassifier":
        model = GraphClassifier(ClassifierConfig(**header["config"]))
    elif header["model"] == "GeneratorModel":
        model = GeneratorModel(GeneratorConfig(**header["config"]))
    else:
        raise IngestionError(f"unknown model type {header['model']!r}")
    model.load_state_dict(state)
    return model
