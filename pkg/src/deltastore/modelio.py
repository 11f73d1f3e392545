"""Model files: a graph document plus a sidecar blob of raw weights.

``model.graph`` holds the graph document; ``model.bin`` next to it holds
every initializer as little-endian float32, concatenated in the order the
document lists them.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .graph import ModelGraph
from .types import Tensor


def sidecar(path) -> Path:
    return Path(path).with_suffix(".bin")


def write_model(path, graph: ModelGraph, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    if set(tensors) != set(graph.initializers):
        raise InvalidArgument("tensors do not match the graph initializers")
    parts = []
    for name, shape in graph.initializers.items():
        arr = np.asarray(tensors[name])
        if arr.shape != shape:
            raise InvalidArgument(f"tensor {name!r} has shape {arr.shape}, graph says {shape}")
        parts.append(arr.astype("<f4").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(graph.to_document())
    sidecar(path).write_bytes(b"".join(parts))
    return path


def read_model(path) -> tuple[ModelGraph, list[Tensor]]:
    path = Path(path)
    try:
        graph = ModelGraph.from_document(path.read_bytes())
        blob = sidecar(path).read_bytes()
    except FileNotFoundError as exc:
        raise InvalidArgument(f"cannot read model {path}: {exc.strerror}") from exc
    need = sum(math.prod(s) for s in graph.initializers.values()) * 4
    if len(blob) != need:
        raise InvalidArgument(f"{sidecar(path)} holds {len(blob)} bytes, expected {need}")
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float32)
    tensors, pos = [], 0
    for name, shape in graph.initializers.items():
        n = math.prod(shape)
        tensors.append(Tensor(name, flat[pos:pos + n].copy(), shape))
        pos += n
    return graph, tensors
