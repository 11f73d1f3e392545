"""Model store that deduplicates weights by delta quantization against shared bases."""

from .compressor import SaveReport, SaveRequest, compress_model, should_compress
from .errors import (CorruptStore, DeltaStoreError, DuplicateName, GraphError, InvalidArgument,
                     InvalidTensor, NotFound, PageSealed, ShapeMismatch, ToleranceTooTight,
                     UnsupportedVersion)
from .graph import ModelGraph, Node, mlp_graph
from .loader import FULL, LoadedModel, augment_graph, load_model, pipelined_load_execute
from .runtime import ExecutionStats, execute
from .storage import ModelStore
from .types import DEFAULT_TAU, DEFAULT_TOLERANCE, BaseRef, Tensor

__version__ = "0.1.0"

__all__ = [
    "BaseRef", "CorruptStore", "DEFAULT_TAU", "DEFAULT_TOLERANCE", "DeltaStoreError",
    "DuplicateName", "ExecutionStats", "FULL", "GraphError", "InvalidArgument", "InvalidTensor",
    "LoadedModel", "ModelGraph", "ModelStore", "Node", "NotFound", "PageSealed", "SaveReport",
    "SaveRequest", "ShapeMismatch", "Tensor", "ToleranceTooTight", "UnsupportedVersion",
    "augment_graph", "compress_model", "execute", "load_model", "mlp_graph",
    "pipelined_load_execute", "should_compress",
]
