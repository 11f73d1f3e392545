"""Similarity search over quantized base tensors."""

from .fileformat import dump_index, load_index
from .hnsw import HnswIndex
from .pool import IndexPool

__all__ = ["HnswIndex", "IndexPool", "dump_index", "load_index"]
