"""Quantization math for base tensors and deltas.

All arithmetic is carried out in float64. Base tensors use 8-bit linear
quantization; deltas use a fixed bin width of ``2p`` and an adaptive bit
width, so that every reconstructed element lies within ``p`` of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bitpack import pack_bits, packed_size, unpack_bits
from .errors import InvalidArgument, InvalidTensor, ShapeMismatch, ToleranceTooTight
from .types import BaseRef, QuantParams, Tensor, as_shape, check_tolerance

MAX_NBIT = 32


def _values(t) -> np.ndarray:
    if isinstance(t, Tensor):
        return t.data.astype(np.float64)
    return np.asarray(t, dtype=np.float64).reshape(-1)


def dequantize_codes(codes: np.ndarray, params: QuantParams, offset: float = 0.0) -> np.ndarray:
    """``delta_min + (code + offset) * scale``, the single reconstruction formula.

    Every reconstruction path goes through here so they agree bitwise.
    """
    c = codes.astype(np.float64)
    if offset:
        c += offset
    return params.delta_min + c * params.scale


@dataclass(frozen=True, eq=False)
class QuantizedBase:
    codes: np.ndarray  # uint8
    params: QuantParams

    def __post_init__(self):
        if self.codes.dtype != np.uint8 or self.codes.ndim != 1:
            raise InvalidArgument("base codes must be a 1-D uint8 array")
        if not self.params.scale > 0:
            raise InvalidArgument("base scale must be positive")

    @property
    def elem_count(self) -> int:
        return self.codes.size

    @property
    def nbytes(self) -> int:
        return self.codes.nbytes + 16


def quantize_base(t) -> QuantizedBase:
    x = _values(t)
    if x.size == 0:
        raise InvalidTensor("cannot quantize an empty tensor")
    lo, hi = float(x.min()), float(x.max())
    scale = (hi - lo) / 255.0 if hi > lo else 1.0
    # round half away from zero; (x - lo) is never negative
    codes = np.floor((x - lo) / scale + 0.5)
    np.clip(codes, 0, 255, out=codes)
    return QuantizedBase(codes.astype(np.uint8), QuantParams(scale, lo))


def dequantize_base(qb: QuantizedBase) -> np.ndarray:
    return dequantize_codes(qb.codes, qb.params)


class Delta(NamedTuple):
    values: np.ndarray
    lo: float
    hi: float

    @property
    def range(self) -> float:
        return self.hi - self.lo


def delta_encode(t, base_full) -> Delta:
    x = _values(t)
    b = np.asarray(base_full, dtype=np.float64).reshape(-1)
    if x.size != b.size:
        raise ShapeMismatch(f"tensor has {x.size} elements, base has {b.size}")
    d = x - b
    if d.size == 0:
        return Delta(d, 0.0, 0.0)
    return Delta(d, float(d.min()), float(d.max()))


def bin_count(delta_range: float, p: float) -> int:
    """Number of width-``2p`` bins needed to cover ``delta_range``."""
    return math.floor(delta_range / (2.0 * p)) + 1


def compute_nbit(delta_range: float, p: float) -> int:
    """Smallest bit width that can address every bin of the delta range."""
    p = check_tolerance(p)
    if not (delta_range >= 0 and math.isfinite(delta_range)):
        raise InvalidArgument(f"delta range must be finite and non-negative, got {delta_range}")
    bins = bin_count(delta_range, p)
    nbit = max(1, (bins - 1).bit_length())
    if nbit > MAX_NBIT:
        raise ToleranceTooTight(
            f"delta range {delta_range:g} at tolerance {p:g} needs {nbit} bits"
        )
    return nbit


@dataclass(frozen=True, eq=False)
class QuantizedDelta:
    payload: bytes
    nbit: int
    params: QuantParams
    base: BaseRef
    elem_count: int
    original_shape: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= self.nbit <= MAX_NBIT:
            raise InvalidArgument(f"nbit must be in [1, 32], got {self.nbit}")
        if len(self.payload) != packed_size(self.elem_count, self.nbit):
            raise InvalidArgument(
                f"payload is {len(self.payload)} bytes, expected "
                f"{packed_size(self.elem_count, self.nbit)}"
            )
        if math.prod(self.original_shape) != self.elem_count:
            raise InvalidArgument("original shape does not match element count")

    def codes(self) -> np.ndarray:
        return unpack_bits(self.payload, self.elem_count, self.nbit)

    @property
    def payload_bytes(self) -> int:
        return len(self.payload)

    def same_as(self, other: QuantizedDelta) -> bool:
        return (
            self.payload == other.payload
            and self.nbit == other.nbit
            and self.params == other.params
            and self.base == other.base
            and self.elem_count == other.elem_count
            and self.original_shape == other.original_shape
        )


def _settle(codes, target, base, params, p, top):
    """Move codes by one bin wherever float64 rounding pushed the error past ``p``."""
    for _ in range(2):
        err = base + dequantize_codes(codes, params, 0.5) - target
        over = (err > p) & (codes > 0)
        under = (err < -p) & (codes < top)
        if not (over.any() or under.any()):
            break
        codes[over] -= 1
        codes[under] += 1
    return codes


def quantize_delta(delta, p: float, base: BaseRef, shape, *, centered: bool = True,
                   target=None, base_full=None) -> QuantizedDelta:
    """Quantize a delta vector with bin width ``2p``.

    ``code = floor((delta - anchor) / 2p)``. The anchor is the lowest edge of
    the quantized range: the delta minimum itself when ``centered`` is false,
    otherwise the minimum moved down by half the unused slack so the extreme
    elements sit strictly inside their bins.

    When ``target`` and ``base_full`` are given the codes are checked against
    ``base_full + dequantized`` instead of the bare delta, which pins the
    end-to-end error rather than only the delta error.
    """
    p = check_tolerance(p)
    d = np.asarray(delta, dtype=np.float64).reshape(-1)
    shape = as_shape(shape)
    if math.prod(shape) != d.size:
        raise ShapeMismatch(f"shape {shape} does not match {d.size} delta values")
    if d.size and not np.isfinite(d).all():
        raise InvalidTensor("delta contains NaN or infinity")
    scale = 2.0 * p
    lo = float(d.min()) if d.size else 0.0
    hi = float(d.max()) if d.size else 0.0
    nbit = compute_nbit(hi - lo, p)
    bins = bin_count(hi - lo, p)
    anchor = lo - (bins * scale - (hi - lo)) / 2.0 if centered else lo
    params = QuantParams(scale, anchor)
    codes = np.floor((d - anchor) / scale)
    np.clip(codes, 0, bins - 1, out=codes)
    codes = codes.astype(np.int64)
    if target is None:
        codes = _settle(codes, d, 0.0, params, p, bins - 1)
    else:
        codes = _settle(codes, _values(target), np.asarray(base_full, np.float64), params, p, bins - 1)
    return QuantizedDelta(pack_bits(codes, nbit), nbit, params, base, d.size, shape)


def dequantize_delta(qd: QuantizedDelta) -> np.ndarray:
    """Reconstruct at bin centres, so the error is at most half a bin."""
    return dequantize_codes(qd.codes(), qd.params, 0.5)


def truncate_msb(qd: QuantizedDelta, b: int) -> QuantizedDelta:
    """Keep only the ``b`` most significant bits of every code."""
    if b < 1:
        raise InvalidArgument(f"bit width must be at least 1, got {b}")
    if qd.nbit <= b:
        return qd
    shift = qd.nbit - b
    codes = qd.codes() >> np.uint32(shift)
    params = QuantParams(qd.params.scale * 2.0**shift, qd.params.delta_min)
    return QuantizedDelta(pack_bits(codes, b), b, params, qd.base, qd.elem_count, qd.original_shape)


def truncation_bound(p: float, nbit: int, b: int) -> float:
    """Worst-case element error after loading ``b`` of ``nbit`` bits."""
    return p * 2.0 ** max(0, nbit - b)


def bits_saved(nbit: int, b: int = 8) -> int:
    return max(0, nbit - b)
