"""Minimal float64 executor for model graphs.

Values are evaluated in topological order and freed after their last use.
``DequantizeLinear`` nodes pull compressed tensors from a loaded model; the
dequantized form of a base vertex is memoized while other initializers still
reference it and dropped as soon as its share count reaches zero.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import GraphError
from .graph import ModelGraph, Node
from .quantizer import dequantize_base, dequantize_delta


@dataclass
class ExecutionStats:
    peak_bytes: int = 0
    resident_bytes: int = 0
    base_dequantizations: Counter = field(default_factory=Counter)
    memo_left: int = 0

    def _charge(self, nbytes: int) -> None:
        self.resident_bytes += nbytes
        self.peak_bytes = max(self.peak_bytes, self.resident_bytes)


class BaseMemo:
    """Dequantized bases kept alive only while some initializer still needs them."""

    def __init__(self, share_count: Mapping, stats: ExecutionStats | None = None):
        self.remaining = dict(share_count)
        self.cache: dict = {}
        self.stats = stats

    def take(self, ref, qb) -> np.ndarray:
        arr = self.cache.get(ref)
        if arr is None:
            arr = dequantize_base(qb)
            if self.stats is not None:
                self.stats.base_dequantizations[ref] += 1
                self.stats._charge(arr.nbytes)
            self.cache[ref] = arr
        self.remaining[ref] -= 1
        if self.remaining[ref] <= 0:
            del self.cache[ref]
            if self.stats is not None:
                self.stats.resident_bytes -= arr.nbytes
        return arr

    def __len__(self) -> int:
        return len(self.cache)


def _as_float(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _matmul(node: Node, a, b):
    if b.ndim != 2 or a.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise GraphError(f"MatMul shapes {a.shape} and {b.shape} do not line up", node.id)
    return a @ b


def _add(node: Node, a, b):
    if a.shape == b.shape or (b.ndim == 1 and a.shape[-1:] == b.shape) or (
            a.ndim == 1 and b.shape[-1:] == a.shape):
        return a + b
    raise GraphError(f"Add shapes {a.shape} and {b.shape} are incompatible", node.id)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def execute(graph: ModelGraph, inputs: Mapping[str, object], *,
            initializers: Mapping[str, np.ndarray] | None = None,
            resolve: Callable[[str], np.ndarray] | None = None,
            model=None, stats: ExecutionStats | None = None) -> dict[str, np.ndarray]:
    """Run ``graph`` and return its outputs by name.

    Initializer values come from ``initializers`` or, when missing there,
    from ``resolve(name)``. Augmented graphs need ``model`` (a loaded model)
    for their ``DequantizeLinear`` nodes.
    """
    stats = stats if stats is not None else ExecutionStats()
    if model is not None:
        stats._charge(model.resident_bytes)
    missing = [n for n in graph.input_names if n not in inputs]
    if missing:
        raise GraphError(f"missing graph inputs: {missing}")

    order = graph.topological()
    uses = Counter(name for node in order for name in node.inputs)
    outputs = set(graph.output_names)
    env: dict[str, np.ndarray] = {}
    memo = BaseMemo(model.share_count, stats) if model is not None else None

    def fetch(name):
        if name in env:
            return env[name]
        if initializers is not None and name in initializers:
            value = _as_float(initializers[name])
        elif resolve is not None:
            value = _as_float(resolve(name))
        else:
            raise GraphError(f"no value for initializer {name!r}")
        env[name] = value
        stats._charge(value.nbytes)
        return value

    def release(name):
        uses[name] -= 1
        if uses[name] == 0 and name not in outputs and name in env:
            stats.resident_bytes -= env.pop(name).nbytes

    for node in order:
        args = [fetch(i) for i in node.inputs]
        op = node.op
        if op == "Input":
            out = _as_float(inputs[node.output])
            declared = node.attrs.get("shape")
            if declared is not None and declared[:1] == [-1] and out.ndim == len(declared) - 1:
                declared = declared[1:]  # a single unbatched sample
            if declared is not None and (len(declared) != out.ndim or any(
                    d not in (-1, s) for d, s in zip(declared, out.shape))):
                raise GraphError(f"input shape {out.shape} does not match {declared}", node.id)
        elif op == "Output":
            out = args[0]
        elif op == "MatMul":
            out = _matmul(node, *args)
        elif op == "Add":
            out = _add(node, *args)
        elif op == "Relu":
            out = np.maximum(args[0], 0.0)
        elif op == "Sigmoid":
            out = _sigmoid(args[0])
        elif op == "Constant":
            out = np.asarray(node.attrs["value"], dtype=np.float64).reshape(node.attrs["shape"])
        elif op == "DequantizeLinear":
            if model is None:
                raise GraphError("DequantizeLinear needs a loaded model", node.id)
            qd = model.deltas[node.attrs["tensor"]]
            if node.attrs["part"] == "base":
                out = memo.take(qd.base, model.bases[qd.base]).reshape(qd.original_shape)
            else:
                out = dequantize_delta(qd).reshape(qd.original_shape)
        else:  # pragma: no cover - rejected at graph construction
            raise GraphError(f"unsupported op {op}", node.id)
        env[node.output] = out
        stats._charge(out.nbytes)
        for name in node.inputs:
            release(name)

    stats.memo_left = len(memo) if memo is not None else 0
    return {name: env[name] for name in graph.output_names}
