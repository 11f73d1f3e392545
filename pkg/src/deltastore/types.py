"""Core value types: tensors, base references and quantization parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidTensor

DEFAULT_TOLERANCE = 2.0**-24  # 5.96e-08
DEFAULT_TAU = 0.16


class BaseRef(NamedTuple):
    """Location of a base tensor: per-shape index id plus vertex id.

    Index ids are the element count of the tensors the index holds.
    ``INLINE`` marks records stored against an implicit all-zero base.
    """

    index_id: int
    vertex_id: int

    @property
    def is_inline(self) -> bool:
        return self.index_id == 0


INLINE = BaseRef(0, 0)


class QuantParams(NamedTuple):
    scale: float
    delta_min: float


@dataclass(frozen=True, eq=False)
class Tensor:
    """A named float32 weight array.

    ``data`` is always kept one-dimensional; ``shape`` is the logical shape.
    A flattened tensor keeps the shape it had before flattening in
    ``original_shape``.
    """

    name: str
    data: np.ndarray
    shape: tuple[int, ...]
    original_shape: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        data = self.data
        if not isinstance(data, np.ndarray) or data.dtype != np.float32:
            raise InvalidTensor(f"{self.name}: data must be a float32 ndarray")
        if data.ndim != 1:
            raise InvalidTensor(f"{self.name}: data must be one-dimensional")
        shape = tuple(int(d) for d in self.shape)
        if any(d <= 0 for d in shape):
            raise InvalidTensor(f"{self.name}: dimensions must be positive, got {shape}")
        if math.prod(shape) != data.size:
            raise InvalidTensor(
                f"{self.name}: shape {shape} does not match {data.size} elements"
            )
        if not np.isfinite(data).all():
            raise InvalidTensor(f"{self.name}: contains NaN or infinity")
        if data.flags.writeable:
            data = data.copy()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_array(cls, name: str, array) -> Tensor:
        if isinstance(array, np.ndarray):
            if array.dtype != np.float32:
                raise InvalidTensor(f"{name}: only float32 weights are supported, got {array.dtype}")
        else:
            array = np.asarray(array, dtype=np.float32)
        shape = array.shape if array.ndim else (1,)
        return cls(name, np.ascontiguousarray(array).reshape(-1), shape)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def array(self) -> np.ndarray:
        """The data viewed in its logical shape (read-only)."""
        return self.data.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.original_shape == other.original_shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self):
        return hash((self.name, self.shape))


def flatten(tensor: Tensor) -> Tensor:
    """Flatten to a single dimension, remembering the shape for later."""
    original = tensor.original_shape if tensor.original_shape is not None else tensor.shape
    return Tensor(tensor.name, tensor.data, (tensor.size,), original)


def unflatten(tensor: Tensor) -> Tensor:
    if tensor.original_shape is None:
        return tensor
    return Tensor(tensor.name, tensor.data, tensor.original_shape)


def pool_key(tensor: Tensor) -> int:
    """Tensors share an index exactly when their element counts match."""
    return tensor.size


def check_tolerance(p: float) -> float:
    p = float(p)
    if not (p > 0 and math.isfinite(p)):
        raise InvalidArgument(f"precision tolerance must be a positive finite number, got {p}")
    return p


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not (tau > 0 and math.isfinite(tau)):
        raise InvalidArgument(f"similarity threshold must be a positive finite number, got {tau}")
    return tau


def as_shape(dims: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(d) for d in dims)
