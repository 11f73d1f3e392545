"""HNSW graph over 8-bit quantized vectors of one fixed length."""

from __future__ import annotations

import math

import numpy as np

from ..errors import CorruptStore, InvalidArgument, ShapeMismatch
from ..quantizer import QuantizedBase, dequantize_codes
from ..types import QuantParams
from . import _kernels

MAX_LEVEL = 7

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 256


class HnswIndex:
    """Hierarchical navigable small world graph keyed by element count.

    Vertices are append-only; ids are assigned sequentially and never reused.
    Callers are responsible for locking: the index itself is not thread safe
    for writes.
    """

    def __init__(self, elem_count: int, m: int = DEFAULT_M,
                 ef_construction: int = DEFAULT_EF_CONSTRUCTION,
                 ef_search: int = DEFAULT_EF_SEARCH, seed: int = 0, capacity: int = 16):
        if elem_count <= 0:
            raise InvalidArgument("element count must be positive")
        if m < 2:
            raise InvalidArgument("M must be at least 2")
        self.elem_count = int(elem_count)
        self.m = int(m)
        self.m0 = 2 * self.m
        self.ef_construction = int(ef_construction)
        self.ef_search = int(ef_search)
        self.seed = int(seed)
        self.level_mult = 1.0 / math.log(self.m)
        self.count = 0
        self.entry = -1
        self.max_level = -1
        self._alloc(max(1, capacity))

    def _alloc(self, cap: int) -> None:
        self.codes = np.zeros((cap, self.elem_count), np.uint8)
        self.scales = np.zeros(cap, np.float64)
        self.mins = np.zeros(cap, np.float64)
        self.levels = np.zeros(cap, np.int8)
        self.links = np.zeros((cap, MAX_LEVEL + 1, self.m0), np.int32)
        self.counts = np.zeros((cap, MAX_LEVEL + 1), np.int32)

    def _grow(self) -> None:
        old = (self.codes, self.scales, self.mins, self.levels, self.links, self.counts)
        self._alloc(2 * len(self.scales))
        for new, prev in zip((self.codes, self.scales, self.mins, self.levels, self.links, self.counts), old):
            new[: self.count] = prev[: self.count]

    def __len__(self) -> int:
        return self.count

    @property
    def nbytes(self) -> int:
        """Resident size used for cache accounting."""
        n = self.count
        return n * (self.elem_count + 16) + int(self.counts[:n].sum()) * 4 + n

    def draw_level(self, vertex_id: int) -> int:
        # derived from (seed, id) so a reloaded index keeps drawing the same levels
        u = np.random.default_rng([self.seed, vertex_id]).random()
        return min(MAX_LEVEL, int(-math.log(1.0 - u) * self.level_mult))

    def vertex(self, vertex_id: int) -> QuantizedBase:
        if not 0 <= vertex_id < self.count:
            raise CorruptStore(f"vertex {vertex_id} does not exist in index {self.elem_count}")
        return QuantizedBase(self.codes[vertex_id].copy(),
                             QuantParams(float(self.scales[vertex_id]), float(self.mins[vertex_id])))

    def dequantized(self, vertex_id: int) -> np.ndarray:
        return dequantize_codes(self.codes[vertex_id],
                                QuantParams(self.scales[vertex_id], self.mins[vertex_id]))

    def neighbors(self, vertex_id: int, layer: int = 0) -> np.ndarray:
        return self.links[vertex_id, layer, : self.counts[vertex_id, layer]].copy()

    def _search_layer(self, q, entries, ef, layer):
        return _kernels.search_layer(q, self.codes, self.scales, self.mins, self.links,
                                     self.counts, layer, self.count,
                                     np.asarray(entries, dtype=np.int64), ef)

    def _connect(self, nb: int, new: int, layer: int, cap: int) -> None:
        cnt = self.counts[nb, layer]
        if cnt < cap:
            self.links[nb, layer, cnt] = new
            self.counts[nb, layer] = cnt + 1
            return
        cand = np.append(self.links[nb, layer, :cnt].astype(np.int64), new)
        d = _kernels.distances(self.dequantized(nb), self.codes, self.scales, self.mins, cand)
        order = np.lexsort((cand, d))
        keep = _kernels.select_neighbors(cand[order], d[order], cap,
                                         self.codes, self.scales, self.mins)
        self.links[nb, layer, : keep.size] = keep
        self.counts[nb, layer] = keep.size

    def add(self, qb: QuantizedBase) -> int:
        if qb.elem_count != self.elem_count:
            raise ShapeMismatch(
                f"index holds {self.elem_count}-element vectors, got {qb.elem_count}"
            )
        if self.count == len(self.scales):
            self._grow()
        vid = self.count
        self.codes[vid] = qb.codes
        self.scales[vid] = qb.params.scale
        self.mins[vid] = qb.params.delta_min
        level = self.draw_level(vid)
        self.levels[vid] = level
        self.counts[vid] = 0
        self.count += 1
        if self.entry < 0:
            self.entry, self.max_level = vid, level
            return vid

        q = self.dequantized(vid)
        entries = np.array([self.entry], dtype=np.int64)
        for layer in range(self.max_level, level, -1):
            ids, _ = self._search_layer(q, entries, 1, layer)
            entries = ids[:1]
        for layer in range(min(level, self.max_level), -1, -1):
            ids, d = self._search_layer(q, entries, self.ef_construction, layer)
            mask = ids != vid
            ids, d = ids[mask], d[mask]
            chosen = _kernels.select_neighbors(ids, d, self.m, self.codes, self.scales, self.mins)
            self.links[vid, layer, : chosen.size] = chosen
            self.counts[vid, layer] = chosen.size
            cap = self.m0 if layer == 0 else self.m
            for nb in chosen.tolist():
                self._connect(nb, vid, layer, cap)
            entries = ids
        if level > self.max_level:
            self.entry, self.max_level = vid, level
        return vid

    def search(self, query, k: int = 1, ef: int | None = None):
        """Approximate k nearest vertices; returns (ids, squared distances)."""
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.size != self.elem_count:
            raise ShapeMismatch(f"query has {q.size} elements, index expects {self.elem_count}")
        if self.count == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        ef = max(ef or self.ef_search, k)
        entries = np.array([self.entry], dtype=np.int64)
        for layer in range(self.max_level, 0, -1):
            ids, _ = self._search_layer(q, entries, 1, layer)
            entries = ids[:1]
        ids, d = self._search_layer(q, entries, ef, 0)
        return ids[:k], d[:k]

    def brute_force(self, query, k: int = 1):
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        ids = np.arange(self.count, dtype=np.int64)
        d = _kernels.distances(q, self.codes, self.scales, self.mins, ids)
        order = np.lexsort((ids, d))[:k]
        return ids[order], d[order]

    def check(self) -> None:
        """Validate graph invariants; raises CorruptStore."""
        n = self.count
        if n == 0:
            if self.entry != -1:
                raise CorruptStore("empty index with an entry point")
            return
        if not 0 <= self.entry < n or self.levels[self.entry] != self.max_level:
            raise CorruptStore("bad entry point")
        levels = self.levels[:n].astype(np.int64)
        if (levels < 0).any() or (levels > self.max_level).any():
            raise CorruptStore("vertex level out of range")
        counts = self.counts[:n]
        layer = np.arange(MAX_LEVEL + 1)
        caps = np.where(layer == 0, self.m0, self.m)
        if (counts < 0).any() or (counts > caps).any():
            raise CorruptStore("too many links on a vertex")
        if (counts[layer[None, :] > levels[:, None]] != 0).any():
            raise CorruptStore("links above a vertex's level")
        live = np.arange(self.m0)[None, None, :] < counts[:, :, None]
        targets = self.links[:n][live]
        if targets.size and ((targets < 0).any() or (targets >= n).any()):
            raise CorruptStore("link to a missing vertex")
        owner_layer = np.broadcast_to(layer[None, :, None], live.shape)[live]
        if targets.size and (levels[targets] < owner_layer).any():
            raise CorruptStore("link outside the target's layers")
