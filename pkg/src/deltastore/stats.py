"""Store-wide storage accounting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .compressor import vertex_cost
from .quantizer import bits_saved
from .storage import ModelStore


@dataclass
class ModelStats:
    name: str
    original_bytes: int
    stored_bytes: int
    index_bytes: float
    nbits: list[int]

    @property
    def ratio(self) -> float:
        denom = self.stored_bytes + self.index_bytes
        return self.original_bytes / denom if denom else 1.0


@dataclass
class StoreStats:
    models: list[ModelStats] = field(default_factory=list)
    index_bytes: int = 0
    vertices: int = 0

    @property
    def original_bytes(self) -> int:
        return sum(m.original_bytes for m in self.models)

    @property
    def delta_bytes(self) -> int:
        return sum(m.stored_bytes for m in self.models)

    @property
    def records(self) -> int:
        return sum(len(m.nbits) for m in self.models)

    @property
    def ratio(self) -> float:
        denom = self.delta_bytes + self.index_bytes
        return self.original_bytes / denom if denom else 1.0

    def mean_bits_saved(self, b: int = 8) -> Fraction:
        """Exact mean over records of max(0, nbit - b)."""
        if not self.records:
            return Fraction(0)
        return Fraction(sum(bits_saved(n, b) for m in self.models for n in m.nbits), self.records)

    def nbit_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(n for m in self.models for n in m.nbits).items()))

    def ratio_cdf(self) -> list[tuple[float, float]]:
        """(ratio, fraction of models with ratio at most this) in ascending order."""
        ratios = sorted(m.ratio for m in self.models)
        return [(r, (i + 1) / len(ratios)) for i, r in enumerate(ratios)]


def collect(store: ModelStore) -> StoreStats:
    """Scan the catalog and every page.

    Each base vertex's bytes are split evenly over all records that
    reference it, so a model's index share shrinks as others reuse its bases.
    """
    totals = store.catalog.ref_counts()
    out = StoreStats(index_bytes=store.pool.index_bytes(), vertices=store.pool.total_vertices())
    for entry in store.catalog.list():
        records = store.page(entry).read_all()
        mine = Counter(r.delta.base for r in records if not r.delta.base.is_inline)
        share = sum(vertex_cost(ref.index_id) * n / totals[ref] for ref, n in mine.items())
        out.models.append(ModelStats(entry.name, entry.original_bytes, entry.stored_bytes,
                                     share, [r.delta.nbit for r in records]))
    return out
