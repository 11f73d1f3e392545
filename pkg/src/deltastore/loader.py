"""Model loading at a chosen delta bit width, graph augmentation and pipelining."""

from __future__ import annotations

import queue
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import CorruptStore
from .graph import ModelGraph, Node
from .quantizer import QuantizedBase, QuantizedDelta, dequantize_base, dequantize_delta, truncate_msb
from .runtime import BaseMemo, ExecutionStats, execute
from .storage import ModelEntry, ModelStore
from .types import BaseRef

FULL = None  # load every stored bit


def parse_bits(value) -> int | None:
    if value is None or str(value).upper() == "FULL":
        return FULL
    bits = int(value)
    if bits < 1:
        raise ValueError(f"bit width must be at least 1, got {bits}")
    return bits


@dataclass(frozen=True, eq=False)
class LoadedModel:
    """Compressed tensors of one model, ready for execution.

    Only quantized forms are held: each delta at the requested bit width and
    each referenced base once, however many initializers share it.
    """

    entry: ModelEntry
    graph: ModelGraph
    bits: int | None
    deltas: dict[str, QuantizedDelta]
    bases: dict[BaseRef, QuantizedBase]
    share_count: dict[BaseRef, int]
    base_fetches: int

    @property
    def payload_bytes(self) -> int:
        return sum(qd.payload_bytes for qd in self.deltas.values())

    @property
    def resident_bytes(self) -> int:
        return self.payload_bytes + sum(qb.codes.nbytes for qb in self.bases.values())


def _bits_view(qd: QuantizedDelta, bits: int | None) -> QuantizedDelta:
    return qd if bits is None else truncate_msb(qd, bits)


def load_model(store: ModelStore, model, bits: int | None = FULL) -> LoadedModel:
    entry = store.model(model)
    graph = ModelGraph.from_document(store.archs.load(entry.arch_key))
    page = store.page(entry)
    deltas: dict[str, QuantizedDelta] = {}
    bases: dict[BaseRef, QuantizedBase] = {}
    share = Counter()
    for record in page.read_all():
        qd = _bits_view(record.delta, bits)
        deltas[record.name] = qd
        if qd.base.is_inline:
            continue
        share[qd.base] += 1
        if qd.base not in bases:
            bases[qd.base] = store.pool.get_vertex(qd.base)
    missing = set(graph.initializers) - set(deltas)
    if missing:
        raise CorruptStore(f"model {entry.name!r} page lacks tensors {sorted(missing)}")
    return LoadedModel(entry, graph, bits, deltas, bases, dict(share), len(bases))


def reconstruct(lm: LoadedModel, name: str) -> np.ndarray:
    """Eager float64 reconstruction of one initializer."""
    qd = lm.deltas[name]
    delta = dequantize_delta(qd).reshape(qd.original_shape)
    if qd.base.is_inline:
        return delta
    return dequantize_base(lm.bases[qd.base]).reshape(qd.original_shape) + delta


def reconstruct_all(lm: LoadedModel) -> dict[str, np.ndarray]:
    return {name: reconstruct(lm, name) for name in lm.deltas}


def augment_graph(lm: LoadedModel) -> ModelGraph:
    """Replace every stored initializer by an on-the-fly reconstruction subgraph.

    Compressed initializers get ``DequantizeLinear(base)``,
    ``DequantizeLinear(delta)`` and an ``Add``; inline ones (no base) get a
    single ``DequantizeLinear(delta)``. Consumers are rewired to the new value.
    """
    graph = lm.graph
    added: list[Node] = []
    rename: dict[str, str] = {}
    for name in graph.consumption_order():
        qd = lm.deltas[name]
        delta_node = Node(f"{name}/dequantize_delta", "DequantizeLinear", (), f"{name}/delta",
                          {"tensor": name, "part": "delta"})
        if qd.base.is_inline:
            added.append(delta_node)
            rename[name] = delta_node.output
            continue
        base_node = Node(f"{name}/dequantize_base", "DequantizeLinear", (), f"{name}/base",
                         {"tensor": name, "part": "base"})
        add_node = Node(f"{name}/reconstruct", "Add", (base_node.output, delta_node.output),
                        f"{name}/reconstructed")
        added += [base_node, delta_node, add_node]
        rename[name] = add_node.output
    rewired = [
        Node(n.id, n.op, tuple(rename.get(i, i) for i in n.inputs), n.output, n.attrs)
        for n in graph.nodes
    ]
    return ModelGraph(added + rewired, {})


def run(lm: LoadedModel, inputs: Mapping, stats: ExecutionStats | None = None) -> dict[str, np.ndarray]:
    """Sequential compression-aware inference through the augmented graph."""
    return execute(augment_graph(lm), inputs, model=lm, stats=stats)


def run_eager(lm: LoadedModel, inputs: Mapping) -> dict[str, np.ndarray]:
    """Reconstruct every tensor up front, then run the plain graph."""
    return execute(lm.graph, inputs, initializers=reconstruct_all(lm))


# -- pipelining ------------------------------------------------------------

class _Failed:
    def __init__(self, exc: BaseException):
        self.exc = exc


_DONE = object()


def _put(q: queue.Queue, item, stop: threading.Event) -> bool:
    while not stop.is_set():
        try:
            q.put(item, timeout=0.05)
            return True
        except queue.Full:
            continue
    return False


def pipelined_load_execute(store: ModelStore, model, bits: int | None, inputs: Mapping,
                           *, delays: Mapping[str, float] | None = None,
                           stats: ExecutionStats | None = None) -> dict[str, np.ndarray]:
    """Load, decompress and compute concurrently.

    Three roles connected by hand-offs of depth one: record I/O (reads the
    next delta record and its base), decompression (dequantize and add), and
    graph computation, which blocks whenever it needs a tensor that has not
    been reconstructed yet. ``delays`` injects a sleep per item into the
    ``"io"``, ``"decompress"`` or ``"compute"`` stage (used in tests).
    """
    delays = dict(delays or {})
    entry = store.model(model)
    graph = ModelGraph.from_document(store.archs.load(entry.arch_key))
    page = store.page(entry)
    refs = [ref for ref in page.base_refs() if not ref.is_inline]
    share = Counter(refs)
    stop = threading.Event()
    loaded: queue.Queue = queue.Queue(maxsize=1)
    ready: queue.Queue = queue.Queue(maxsize=1)

    def io_stage():
        try:
            fetched: dict[BaseRef, QuantizedBase] = {}
            for i in range(len(page)):
                if delays.get("io"):
                    time.sleep(delays["io"])
                record = page.read_record(i)
                qd = _bits_view(record.delta, bits)
                qb = None
                if not qd.base.is_inline:
                    qb = fetched.get(qd.base)
                    if qb is None:
                        qb = fetched[qd.base] = store.pool.get_vertex(qd.base)
                if not _put(loaded, (record.name, qd, qb), stop):
                    return
                if qb is not None:
                    share[qd.base] -= 1
                    if share[qd.base] == 0:
                        del fetched[qd.base]
            _put(loaded, _DONE, stop)
        except BaseException as exc:  # handed to the consumer
            _put(loaded, _Failed(exc), stop)

    def decompress_stage():
        memo = BaseMemo(Counter(refs))
        try:
            while not stop.is_set():
                try:
                    item = loaded.get(timeout=0.05)
                except queue.Empty:
                    continue
                if item is _DONE or isinstance(item, _Failed):
                    _put(ready, item, stop)
                    return
                if delays.get("decompress"):
                    time.sleep(delays["decompress"])
                name, qd, qb = item
                delta = dequantize_delta(qd).reshape(qd.original_shape)
                if qb is None:
                    tensor = delta
                else:
                    tensor = memo.take(qd.base, qb).reshape(qd.original_shape) + delta
                if not _put(ready, (name, tensor), stop):
                    return
        except BaseException as exc:
            _put(ready, _Failed(exc), stop)

    parked: dict[str, np.ndarray] = {}

    def resolve(name: str) -> np.ndarray:
        while name not in parked:
            item = ready.get()
            if item is _DONE:
                raise CorruptStore(f"page of {entry.name!r} has no tensor {name!r}")
            if isinstance(item, _Failed):
                raise item.exc
            if delays.get("compute"):
                time.sleep(delays["compute"])
            parked[item[0]] = item[1]
        return parked.pop(name)

    workers = [threading.Thread(target=io_stage, name="io", daemon=True),
               threading.Thread(target=decompress_stage, name="decompress", daemon=True)]
    for w in workers:
        w.start()
    try:
        return execute(graph, inputs, resolve=resolve, stats=stats)
    finally:
        stop.set()
        for w in workers:
            w.join()
