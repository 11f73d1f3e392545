"""Tensor pages: immutable files holding every delta record of one model.

Layout, all integers little-endian::

    magic "NSPG" | u16 version | u32 record count
    count x (u64 offset, u64 length)          -- offsets from start of file
    records, back to back, in architecture order

Record::

    u32 name length | name (utf-8) | u32 ndim | ndim x u64 dims
    u64 index id | u64 vertex id | u8 nbit | f64 scale | f64 delta_min
    u64 payload length | payload (bit-packed codes)
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..bitpack import packed_size
from ..errors import CorruptStore, DeltaStoreError, InvalidArgument, PageSealed, UnsupportedVersion
from ..quantizer import QuantizedDelta
from ..types import BaseRef, QuantParams

MAGIC = b"NSPG"
VERSION = 1
_HEAD = struct.Struct("<4sHI")
_ENTRY = struct.Struct("<QQ")
_U32 = struct.Struct("<I")
_BASE = struct.Struct("<QQ")
_QUANT = struct.Struct("<Bdd")
_U64 = struct.Struct("<Q")
MAX_NDIM = 64


@dataclass(frozen=True, eq=False)
class DeltaRecord:
    name: str
    delta: QuantizedDelta

    def same_as(self, other: DeltaRecord) -> bool:
        return self.name == other.name and self.delta.same_as(other.delta)


def encode_record(record: DeltaRecord) -> bytes:
    qd = record.delta
    name = record.name.encode("utf-8")
    dims = qd.original_shape
    return b"".join((
        _U32.pack(len(name)), name,
        _U32.pack(len(dims)), struct.pack(f"<{len(dims)}Q", *dims),
        _BASE.pack(*qd.base),
        _QUANT.pack(qd.nbit, qd.params.scale, qd.params.delta_min),
        _U64.pack(len(qd.payload)), qd.payload,
    ))


def decode_record(buf: bytes) -> DeltaRecord:
    try:
        pos = 0
        (name_len,) = _U32.unpack_from(buf, pos)
        pos += 4
        if pos + name_len > len(buf):
            raise CorruptStore("record name runs past the record")
        name = bytes(buf[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = _U32.unpack_from(buf, pos)
        pos += 4
        if ndim == 0 or ndim > MAX_NDIM:
            raise CorruptStore(f"record {name!r} has {ndim} dimensions")
        dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        index_id, vertex_id = _BASE.unpack_from(buf, pos)
        pos += _BASE.size
        nbit, scale, delta_min = _QUANT.unpack_from(buf, pos)
        pos += _QUANT.size
        (plen,) = _U64.unpack_from(buf, pos)
        pos += 8
    except struct.error as exc:
        raise CorruptStore(f"record is truncated: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise CorruptStore("record name is not valid utf-8") from exc
    if any(d == 0 for d in dims):
        raise CorruptStore(f"record {name!r} has a zero dimension")
    count = math.prod(dims)
    if not 1 <= nbit <= 32:
        raise CorruptStore(f"record {name!r} has nbit {nbit}")
    if not (math.isfinite(scale) and scale > 0 and math.isfinite(delta_min)):
        raise CorruptStore(f"record {name!r} has invalid quantization parameters")
    if plen != packed_size(count, nbit) or pos + plen != len(buf):
        raise CorruptStore(f"record {name!r} payload length does not match its shape")
    payload = bytes(buf[pos:pos + plen])
    try:
        qd = QuantizedDelta(payload, nbit, QuantParams(scale, delta_min),
                            BaseRef(index_id, vertex_id), count, tuple(dims))
    except DeltaStoreError as exc:
        raise CorruptStore(str(exc)) from exc
    return DeltaRecord(name, qd)


def header_size(count: int) -> int:
    return _HEAD.size + count * _ENTRY.size


def write_page(records: Iterable[DeltaRecord], path) -> int:
    """Write and seal a page; returns its size in bytes."""
    path = Path(path)
    if path.exists():
        raise PageSealed(f"{path} is sealed")
    blobs = [encode_record(r) for r in records]
    offset = header_size(len(blobs))
    table = []
    for blob in blobs:
        table.append(_ENTRY.pack(offset, len(blob)))
        offset += len(blob)
    data = b"".join([_HEAD.pack(MAGIC, VERSION, len(blobs)), *table, *blobs])
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "xb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o444)
        os.link(tmp, path)  # fails if a page appeared meanwhile
    except FileExistsError:
        raise PageSealed(f"{path} is sealed") from None
    finally:
        if tmp.exists():
            tmp.unlink()
    return len(data)


def parse_header(data: bytes, file_size: int) -> list[tuple[int, int]]:
    """Validate a page header; returns (offset, length) per record."""
    if len(data) < _HEAD.size:
        raise CorruptStore("page is truncated")
    magic, version, count = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptStore("not a tensor page")
    if version != VERSION:
        raise UnsupportedVersion(f"page format version {version} is not supported")
    end = header_size(count)
    if end > min(len(data), file_size):
        raise CorruptStore("page header is truncated")
    entries = []
    expected = end
    for i in range(count):
        offset, length = _ENTRY.unpack_from(data, _HEAD.size + i * _ENTRY.size)
        if offset != expected:
            raise CorruptStore(f"record {i} offset {offset} breaks the record chain")
        entries.append((offset, length))
        expected = offset + length
    if expected != file_size:
        raise CorruptStore("page records do not fill the file exactly")
    return entries


class TensorPage:
    """Read-only random access to a sealed page."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.size = self.path.stat().st_size
            with open(self.path, "rb") as fh:
                head = fh.read(_HEAD.size)
                if len(head) == _HEAD.size and head[:4] == MAGIC:
                    count = _HEAD.unpack(head)[2]
                    head += fh.read(min(count * _ENTRY.size, self.size))
        except FileNotFoundError as exc:
            raise CorruptStore(f"page {self.path} is missing") from exc
        self.entries = parse_header(head, self.size)

    def __len__(self) -> int:
        return len(self.entries)

    def _read(self, offset: int, length: int) -> bytes:
        with open(self.path, "rb") as fh:
            fh.seek(offset)
            data = fh.read(length)
        if len(data) != length:
            raise CorruptStore(f"page {self.path} is truncated")
        return data

    def read_record(self, i: int) -> DeltaRecord:
        if not 0 <= i < len(self.entries):
            raise IndexError(f"record {i} out of range for a page of {len(self.entries)}")
        return decode_record(self._read(*self.entries[i]))

    def read_all(self) -> list[DeltaRecord]:
        return [self.read_record(i) for i in range(len(self))]

    def base_refs(self) -> list[BaseRef]:
        """Base reference of every record, without reading payloads."""
        refs = []
        for offset, length in self.entries:
            head = self._read(offset, min(length, 4))
            (name_len,) = _U32.unpack_from(head.ljust(4, b"\0"))
            ndim_pos = offset + 4 + name_len
            ndim_raw = self._read(ndim_pos, 4)
            (ndim,) = _U32.unpack(ndim_raw)
            if ndim == 0 or ndim > MAX_NDIM or 8 + 8 * ndim + 16 > offset + length - ndim_pos:
                raise CorruptStore("record header is malformed")
            refs.append(BaseRef(*_BASE.unpack(self._read(ndim_pos + 4 + 8 * ndim, 16))))
        return refs


def read_page_bytes(data: bytes) -> list[DeltaRecord]:
    """Decode a whole page held in memory (used by format tests)."""
    entries = parse_header(data, len(data))
    return [decode_record(data[o:o + n]) for o, n in entries]


def check_records(records) -> None:
    names = [r.name for r in records]
    if len(set(names)) != len(names):
        raise InvalidArgument("record names must be unique within a page")
