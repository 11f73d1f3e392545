"""Fixed-width bit packing.

Layout: code ``i`` occupies bits ``[i*nbit, (i+1)*nbit)`` of the payload,
least significant bit first, bytes in little-endian order, and the final
byte is padded with zero bits.
"""

import numpy as np

from ._jit import njit, pick
from .errors import InvalidArgument

_CHUNK = 1 << 16  # multiple of 8, so chunk boundaries fall on byte boundaries


def packed_size(count: int, nbit: int) -> int:
    return (count * nbit + 7) // 8


@njit
def pack_bits_numba(codes, nbit):
    n = codes.size
    out = np.zeros((n * nbit + 7) // 8, np.uint8)
    width = np.uint64(nbit)
    mask = (np.uint64(1) << width) - np.uint64(1)
    acc = np.uint64(0)
    filled = np.uint64(0)
    pos = 0
    for i in range(n):
        acc |= (np.uint64(codes[i]) & mask) << filled
        filled += width
        while filled >= np.uint64(8):
            out[pos] = np.uint8(acc & np.uint64(0xFF))
            acc >>= np.uint64(8)
            filled -= np.uint64(8)
            pos += 1
    if filled > np.uint64(0):
        out[pos] = np.uint8(acc & np.uint64(0xFF))
    return out


@njit
def unpack_bits_numba(buf, n, nbit):
    out = np.empty(n, np.uint32)
    width = np.uint64(nbit)
    mask = (np.uint64(1) << width) - np.uint64(1)
    acc = np.uint64(0)
    have = np.uint64(0)
    pos = 0
    for i in range(n):
        while have < width:
            acc |= np.uint64(buf[pos]) << have
            have += np.uint64(8)
            pos += 1
        out[i] = np.uint32(acc & mask)
        acc >>= width
        have -= width
    return out


def pack_bits_numpy(codes, nbit):
    codes = np.asarray(codes)
    if nbit in (8, 16, 32):
        return np.frombuffer(codes.astype(f"<u{nbit // 8}").tobytes(), np.uint8).copy()
    shifts = np.arange(nbit, dtype=np.uint64)
    parts = []
    for start in range(0, codes.size, _CHUNK):
        chunk = codes[start:start + _CHUNK].astype(np.uint64)
        bits = ((chunk[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        parts.append(np.packbits(bits.reshape(-1), bitorder="little"))
    if not parts:
        return np.zeros(0, np.uint8)
    return np.concatenate(parts)


def unpack_bits_numpy(buf, n, nbit):
    buf = np.asarray(buf, dtype=np.uint8)
    if nbit in (8, 16, 32):
        return np.frombuffer(buf[: n * nbit // 8].tobytes(), f"<u{nbit // 8}").astype(np.uint32)
    weights = np.uint64(1) << np.arange(nbit, dtype=np.uint64)
    out = np.empty(n, np.uint32)
    bytes_per_chunk = _CHUNK * nbit // 8
    for k, start in enumerate(range(0, n, _CHUNK)):
        count = min(_CHUNK, n - start)
        raw = buf[k * bytes_per_chunk: k * bytes_per_chunk + packed_size(count, nbit)]
        bits = np.unpackbits(raw, bitorder="little")[: count * nbit].reshape(count, nbit)
        out[start:start + count] = bits.astype(np.uint64) @ weights
    return out


_pack = pick(pack_bits_numba, pack_bits_numpy)
_unpack = pick(unpack_bits_numba, unpack_bits_numpy)


def pack_bits(codes, nbit: int) -> bytes:
    """Pack unsigned integer codes, each below ``2**nbit``, into bytes."""
    if not 1 <= nbit <= 32:
        raise InvalidArgument(f"nbit must be in [1, 32], got {nbit}")
    codes = np.ascontiguousarray(codes, dtype=np.uint64).reshape(-1)
    if codes.size and int(codes.max()) >> nbit:
        raise InvalidArgument(f"code {int(codes.max())} does not fit in {nbit} bits")
    return _pack(codes, nbit).tobytes()


def unpack_bits(payload: bytes, count: int, nbit: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns ``count`` uint32 codes."""
    if not 1 <= nbit <= 32:
        raise InvalidArgument(f"nbit must be in [1, 32], got {nbit}")
    need = packed_size(count, nbit)
    if len(payload) < need:
        raise InvalidArgument(f"payload holds {len(payload)} bytes, {need} needed")
    buf = np.frombuffer(payload, np.uint8, count=need)
    return _unpack(buf, count, nbit)
