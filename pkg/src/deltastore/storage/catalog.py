"""Model catalog persisted as a single JSON document."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from ..errors import CorruptStore, DuplicateName, NotFound
from ..types import BaseRef

FORMAT = "deltastore.catalog"
VERSION = 1


@dataclass
class ModelEntry:
    name: str
    page: str
    arch_key: str
    tolerance: float
    tau: float
    original_bytes: int
    stored_bytes: int
    tensor_count: int
    id: int = -1
    created: float = field(default_factory=time.time)


def _ref_key(ref: BaseRef) -> str:
    return f"{ref.index_id}:{ref.vertex_id}"


class Catalog:
    """Models in insertion order, plus how many records reference each vertex."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._models: list[ModelEntry] = []
        self._refs: dict[str, int] = {}
        self._next_id = 1
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            doc = json.loads(self.path.read_text(encoding="utf-8"))
            if doc.get("format") != FORMAT or doc.get("version") != VERSION:
                raise CorruptStore(f"{self.path} is not a version {VERSION} catalog")
            self._models = [ModelEntry(**m) for m in doc["models"]]
            self._refs = {str(k): int(v) for k, v in doc["vertex_refs"].items()}
            self._next_id = int(doc["next_id"])
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptStore(f"catalog {self.path} is unreadable: {exc}") from exc

    def _save(self) -> None:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "next_id": self._next_id,
            "models": [asdict(m) for m in self._models],
            "vertex_refs": self._refs,
        }
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(doc, indent=1), encoding="utf-8")
        os.replace(tmp, self.path)

    def has_name(self, name: str) -> bool:
        with self._lock:
            return any(m.name == name for m in self._models)

    def put(self, entry: ModelEntry, refs: Iterable[BaseRef] = ()) -> ModelEntry:
        """Register a model and its base references in one step."""
        with self._lock:
            if any(m.name == entry.name for m in self._models):
                raise DuplicateName(f"a model named {entry.name!r} already exists")
            entry.id = self._next_id
            self._next_id += 1
            self._models.append(entry)
            for ref in refs:
                if not ref.is_inline:
                    key = _ref_key(ref)
                    self._refs[key] = self._refs.get(key, 0) + 1
            self._save()
            return entry

    def get(self, model) -> ModelEntry:
        with self._lock:
            for m in self._models:
                if (isinstance(model, int) and m.id == model) or m.name == model:
                    return m
        raise NotFound(f"model {model!r} not found")

    def list(self) -> list[ModelEntry]:
        with self._lock:
            return list(self._models)

    def ref_count(self, ref: BaseRef) -> int:
        with self._lock:
            return self._refs.get(_ref_key(ref), 0)

    def ref_counts(self) -> dict[BaseRef, int]:
        with self._lock:
            return {BaseRef(*map(int, k.split(":"))): v for k, v in self._refs.items()}

    def __len__(self) -> int:
        return len(self._models)
