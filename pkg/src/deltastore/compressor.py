"""Saving models: nearest-base search, delta encoding and n-bit quantization."""

from __future__ import annotations

import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DuplicateName, InvalidArgument
from .graph import ModelGraph
from .quantizer import Delta, delta_encode, dequantize_base, quantize_base, quantize_delta
from .similarity import IndexPool
from .storage import DeltaRecord, ModelEntry, ModelStore, write_page
from .types import (DEFAULT_TAU, DEFAULT_TOLERANCE, INLINE, BaseRef, Tensor, check_tau,
                    check_tolerance, flatten)

log = logging.getLogger(__name__)

# smaller tensors skip the index and are stored against an all-zero base
INLINE_BELOW = 16


def vertex_cost(elem_count: int) -> int:
    """Bytes charged for one base vertex: 8-bit codes plus scale and minimum."""
    return elem_count + 16


def should_compress(delta_range: float, tau: float) -> bool:
    return delta_range <= tau


@dataclass
class SaveRequest:
    name: str
    graph: ModelGraph
    tensors: Sequence[Tensor]
    tolerance: float = DEFAULT_TOLERANCE
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        self.tolerance = check_tolerance(self.tolerance)
        self.tau = check_tau(self.tau)
        if not self.name:
            raise InvalidArgument("model name must not be empty")
        by_name = {}
        for t in self.tensors:
            if t.name in by_name:
                raise InvalidArgument(f"tensor {t.name!r} given twice")
            by_name[t.name] = t
        expected = set(self.graph.initializers)
        if set(by_name) != expected:
            raise InvalidArgument(
                f"tensors {sorted(set(by_name) ^ expected)} do not match the graph initializers"
            )
        for name, shape in self.graph.initializers.items():
            if by_name[name].shape != shape:
                raise InvalidArgument(
                    f"tensor {name!r} has shape {by_name[name].shape}, graph says {shape}"
                )
        # architecture order: the order execution consumes them
        self.tensors = [by_name[n] for n in self.graph.consumption_order()]


@dataclass
class TensorReport:
    name: str
    elem_count: int
    nbit: int
    compressed_bytes: int
    new_vertex: bool
    delta_range: float
    base: BaseRef


@dataclass
class SaveReport:
    name: str
    model_id: int
    tolerance: float
    tau: float
    tensors: list[TensorReport] = field(default_factory=list)
    original_bytes: int = 0
    stored_bytes: int = 0
    index_bytes: float = 0.0

    @property
    def ratio(self) -> float:
        denom = self.stored_bytes + self.index_bytes
        if not self.tensors or denom == 0:
            return 1.0
        return self.original_bytes / denom

    @property
    def new_vertices(self) -> int:
        return sum(t.new_vertex for t in self.tensors)

    def nbit_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(t.nbit for t in self.tensors).items()))


def compress_tensor(tensor: Tensor, pool: IndexPool, tolerance: float, tau: float):
    """Encode one tensor; returns its delta record and report line."""
    flat = flatten(tensor)
    x = flat.data
    new_vertex = False
    if flat.size < INLINE_BELOW:
        ref = INLINE
        base_full = np.zeros(flat.size)
        delta = delta_encode(x, base_full)
    else:
        delta: Delta | None = None
        found = pool.search_nearest(x)
        if found is not None:
            ref = found[0]
            base_full = dequantize_base(pool.get_vertex(ref))
            delta = delta_encode(x, base_full)
            if not should_compress(delta.range, tau):
                delta = None
        if delta is None:
            qb = quantize_base(x)
            ref = pool.insert_base(qb)
            base_full = dequantize_base(qb)
            delta = delta_encode(x, base_full)
            new_vertex = True
    qd = quantize_delta(delta.values, tolerance, ref, tensor.shape, target=x, base_full=base_full)
    report = TensorReport(tensor.name, flat.size, qd.nbit, qd.payload_bytes, new_vertex,
                          delta.range, ref)
    return DeltaRecord(tensor.name, qd), report


def compress_model(req: SaveRequest, store: ModelStore, threads: int = 1) -> SaveReport:
    """Compress and persist one model.

    The catalog entry is written last; a failure before that leaves no model
    behind (base vertices added on the way stay in the index).
    """
    if store.catalog.has_name(req.name):
        raise DuplicateName(f"a model named {req.name!r} already exists")
    if threads > 1 and len(req.tensors) > 1:
        with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="compress") as ex:
            results = list(ex.map(
                lambda t: compress_tensor(t, store.pool, req.tolerance, req.tau), req.tensors))
    else:
        results = [compress_tensor(t, store.pool, req.tolerance, req.tau) for t in req.tensors]

    records = [r for r, _ in results]
    reports = [rep for _, rep in results]
    page_path = store.new_page_path()
    stored = write_page(records, page_path)
    arch_key = store.archs.save(req.graph.to_document())
    store.flush()

    refs = [rep.base for rep in reports if not rep.base.is_inline]
    mine = Counter(refs)
    index_bytes = sum(
        vertex_cost(ref.index_id) * n / (store.catalog.ref_count(ref) + n)
        for ref, n in mine.items()
    )
    original = sum(t.nbytes for t in req.tensors)
    entry = ModelEntry(req.name, page_path.name, arch_key, req.tolerance, req.tau,
                       original, stored, len(records))
    try:
        store.catalog.put(entry, refs)
    except DuplicateName:
        os.unlink(page_path)
        raise
    log.info("saved %s: %d tensors, %d new vertices", req.name, len(records),
             sum(r.new_vertex for r in reports))
    return SaveReport(req.name, entry.id, req.tolerance, req.tau, reports, original, stored,
                      index_bytes)
