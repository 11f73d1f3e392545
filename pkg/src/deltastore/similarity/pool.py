"""Per-shape index pool backed by a byte-bounded LRU cache."""

from __future__ import annotations

import logging
import os
import threading
from collections import OrderedDict
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ..errors import CorruptStore, InvalidArgument
from ..quantizer import QuantizedBase
from ..types import BaseRef
from .fileformat import dump_index, load_index
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M, HnswIndex

log = logging.getLogger(__name__)

DEFAULT_CACHE_BYTES = 256 * 1024 * 1024
CACHE_ENV = "DELTASTORE_CACHE_BYTES"


def cache_budget_from_env(default: int = DEFAULT_CACHE_BYTES) -> int:
    raw = os.environ.get(CACHE_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidArgument(f"{CACHE_ENV} must be an integer byte count, got {raw!r}") from None
    if value <= 0:
        raise InvalidArgument(f"{CACHE_ENV} must be positive")
    return value


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class _Slot:
    __slots__ = ("index", "lock", "dirty", "pins")

    def __init__(self, index: HnswIndex, dirty: bool = False):
        self.index = index
        self.lock = RWLock()
        self.dirty = dirty
        self.pins = 0


class IndexPool:
    """All HNSW indexes of a store, one per element count.

    With a ``directory`` the indexes live in ``<directory>/<key>.nsix`` and
    at most ``budget_bytes`` of them stay deserialized in memory; dirty
    indexes are written back before eviction. Without a directory everything
    stays in memory and nothing is evicted.
    """

    def __init__(self, directory: str | os.PathLike | None = None,
                 budget_bytes: int = DEFAULT_CACHE_BYTES, m: int = DEFAULT_M,
                 ef_construction: int = DEFAULT_EF_CONSTRUCTION,
                 ef_search: int = DEFAULT_EF_SEARCH, seed: int = 0):
        if budget_bytes <= 0:
            raise InvalidArgument("cache budget must be positive")
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self.budget_bytes = int(budget_bytes)
        self.params = dict(m=m, ef_construction=ef_construction, ef_search=ef_search, seed=seed)
        self._lock = threading.Lock()
        self._cache: OrderedDict[int, _Slot] = OrderedDict()
        self.loads = 0
        self.evictions = 0

    # -- cache -----------------------------------------------------------

    def _path(self, key: int) -> Path:
        return self.directory / f"{key}.nsix"

    def keys(self) -> list[int]:
        keys = set(self._cache)
        if self.directory is not None:
            keys.update(int(p.stem) for p in self.directory.glob("*.nsix") if p.stem.isdigit())
        return sorted(keys)

    def cached_keys(self) -> list[int]:
        """Resident keys, least recently used first."""
        with self._lock:
            return list(self._cache)

    @property
    def resident_bytes(self) -> int:
        with self._lock:
            return sum(slot.index.nbytes for slot in self._cache.values())

    def _persist(self, key: int, slot: _Slot) -> None:
        if self.directory is None or not slot.dirty:
            return
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(dump_index(slot.index))
        os.replace(tmp, path)
        slot.dirty = False

    def _read(self, key: int) -> HnswIndex | None:
        if self.directory is None:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        self.loads += 1
        return load_index(path.read_bytes(), expected_key=key)

    def _evict_locked(self) -> None:
        total = sum(slot.index.nbytes for slot in self._cache.values())
        for key in list(self._cache):
            if total <= self.budget_bytes or self.directory is None:
                break
            slot = self._cache[key]
            if slot.pins:
                continue
            with slot.lock.read():
                self._persist(key, slot)
            total -= slot.index.nbytes
            del self._cache[key]
            self.evictions += 1
            log.debug("evicted index %d", key)

    @contextmanager
    def _acquire(self, key: int, create: bool = False):
        with self._lock:
            slot = self._cache.get(key)
            if slot is None:
                index = self._read(key)
                if index is not None:
                    slot = _Slot(index)
                elif create:
                    slot = _Slot(HnswIndex(key, **self.params), dirty=True)
            if slot is not None:
                self._cache[key] = slot
                self._cache.move_to_end(key)
                slot.pins += 1
        if slot is None:
            yield None
            return
        try:
            yield slot
        finally:
            with self._lock:
                slot.pins -= 1
                self._evict_locked()

    def flush(self) -> None:
        """Write every dirty index to disk."""
        with self._lock:
            slots = list(self._cache.items())
        for key, slot in slots:
            with slot.lock.read():
                self._persist(key, slot)

    def clear_cache(self) -> None:
        """Drop all resident indexes (after writing back dirty ones)."""
        if self.directory is None:
            return
        self.flush()
        with self._lock:
            for key in [k for k, s in self._cache.items() if not s.pins]:
                del self._cache[key]

    # -- operations ------------------------------------------------------

    def search_nearest(self, query) -> tuple[BaseRef, float] | None:
        """Nearest base vertex for a flattened query, or None without an index."""
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        key = q.size
        with self._acquire(key) as slot:
            if slot is None:
                return None
            with slot.lock.read():
                ids, dists = slot.index.search(q)
            if not ids.size:
                return None
            return BaseRef(key, int(ids[0])), float(dists[0])

    def insert_base(self, qb: QuantizedBase) -> BaseRef:
        key = qb.elem_count
        with self._acquire(key, create=True) as slot:
            with slot.lock.write():
                vid = slot.index.add(qb)
                slot.dirty = True
            return BaseRef(key, vid)

    def get_vertex(self, ref: BaseRef) -> QuantizedBase:
        with self._acquire(ref.index_id) as slot:
            if slot is None:
                raise CorruptStore(f"no index with id {ref.index_id}")
            with slot.lock.read():
                return slot.index.vertex(ref.vertex_id)

    def vertex_count(self, key: int) -> int:
        with self._acquire(key) as slot:
            return 0 if slot is None else len(slot.index)

    def total_vertices(self) -> int:
        return sum(self.vertex_count(k) for k in self.keys())

    def index_bytes(self) -> int:
        """Storage charged to base vertices: codes plus two float64 params each."""
        return sum(self.vertex_count(k) * (k + 16) for k in self.keys())

    def persist_index(self, key: int) -> bytes:
        with self._acquire(key) as slot:
            if slot is None:
                raise CorruptStore(f"no index with id {key}")
            with slot.lock.read():
                return dump_index(slot.index)

    def index(self, key: int) -> HnswIndex | None:
        """Direct access for tests and tools; not locked."""
        with self._acquire(key) as slot:
            return None if slot is None else slot.index
