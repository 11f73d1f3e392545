"""Persistent storage: tensor pages, architectures, catalog."""

from .catalog import Catalog, ModelEntry
from .meta import ArchitectureStore
from .pages import DeltaRecord, TensorPage, decode_record, encode_record, write_page
from .store import ModelStore

__all__ = [
    "ArchitectureStore", "Catalog", "DeltaRecord", "ModelEntry", "ModelStore",
    "TensorPage", "decode_record", "encode_record", "write_page",
]
