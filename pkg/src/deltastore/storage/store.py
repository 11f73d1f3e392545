"""On-disk layout of a store directory.

::

    <root>/catalog.json        model catalog and vertex reference counts
    <root>/indexes/<n>.nsix    HNSW index for n-element tensors
    <root>/pages/<uuid>.nspg   one sealed tensor page per model
    <root>/arch/<sha256>.graph serialized architectures, content addressed
"""

from __future__ import annotations

import uuid
from pathlib import Path

from ..similarity.hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M
from ..similarity.pool import IndexPool, cache_budget_from_env
from .catalog import Catalog, ModelEntry
from .meta import ArchitectureStore
from .pages import TensorPage


class ModelStore:
    def __init__(self, root, cache_bytes: int | None = None, m: int = DEFAULT_M,
                 ef_construction: int = DEFAULT_EF_CONSTRUCTION,
                 ef_search: int = DEFAULT_EF_SEARCH, seed: int = 0):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.pages_dir = self.root / "pages"
        self.pages_dir.mkdir(exist_ok=True)
        budget = cache_bytes if cache_bytes is not None else cache_budget_from_env()
        self.pool = IndexPool(self.root / "indexes", budget, m=m,
                              ef_construction=ef_construction, ef_search=ef_search, seed=seed)
        self.archs = ArchitectureStore(self.root / "arch")
        self.catalog = Catalog(self.root / "catalog.json")

    def new_page_path(self) -> Path:
        return self.pages_dir / f"{uuid.uuid4().hex}.nspg"

    def page(self, entry: ModelEntry) -> TensorPage:
        return TensorPage(self.pages_dir / entry.page)

    def model(self, model) -> ModelEntry:
        return self.catalog.get(model)

    def flush(self) -> None:
        self.pool.flush()
