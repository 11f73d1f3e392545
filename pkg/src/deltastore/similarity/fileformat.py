"""Binary index file format.

Layout (all integers little-endian)::

    header   magic "NSIX", u16 version, u16 flags, u64 pool key (element count),
             u32 M, u32 ef_construction, u32 ef_search, u64 seed,
             u64 vertex count, i64 entry point, i32 max level,
             u32 body crc32, u32 header crc32 (over all preceding header bytes)
    vertices count x (f64 scale, f64 minimum, elem_count x u8 codes)
    links    per vertex: u8 level, then for each layer 0..level:
             u16 link count, link count x u32 vertex id
"""

import struct
import zlib

import numpy as np

from ..errors import CorruptStore, UnsupportedVersion
from .hnsw import MAX_LEVEL, HnswIndex

MAGIC = b"NSIX"
VERSION = 1
_HEADER = struct.Struct("<4sHHQIIIQQqiI")
_HEADER_CRC = struct.Struct("<I")
HEADER_SIZE = _HEADER.size + _HEADER_CRC.size


def _vertex_dtype(elem_count):
    return np.dtype([("scale", "<f8"), ("min", "<f8"), ("codes", "u1", (elem_count,))])


def dump_index(index: HnswIndex) -> bytes:
    n = index.count
    table = np.empty(n, _vertex_dtype(index.elem_count))
    table["scale"] = index.scales[:n]
    table["min"] = index.mins[:n]
    table["codes"] = index.codes[:n]
    parts = [table.tobytes()]
    for v in range(n):
        level = int(index.levels[v])
        parts.append(struct.pack("<B", level))
        for layer in range(level + 1):
            cnt = int(index.counts[v, layer])
            parts.append(struct.pack("<H", cnt))
            parts.append(index.links[v, layer, :cnt].astype("<u4").tobytes())
    body = b"".join(parts)
    head = _HEADER.pack(MAGIC, VERSION, 0, index.elem_count, index.m, index.ef_construction,
                        index.ef_search, index.seed, n, index.entry, index.max_level,
                        zlib.crc32(body))
    return head + _HEADER_CRC.pack(zlib.crc32(head)) + body


def load_index(data: bytes, expected_key: int | None = None) -> HnswIndex:
    if len(data) < HEADER_SIZE:
        raise CorruptStore("index file is truncated")
    head = data[: _HEADER.size]
    (magic, version, flags, elem_count, m, ef_c, ef_s, seed, n, entry, max_level,
     body_crc) = _HEADER.unpack(head)
    (header_crc,) = _HEADER_CRC.unpack_from(data, _HEADER.size)
    if magic != MAGIC:
        raise CorruptStore("not an index file")
    if zlib.crc32(head) != header_crc:
        raise CorruptStore("index header checksum mismatch")
    if version != VERSION:
        raise UnsupportedVersion(f"index format version {version} is not supported")
    if flags or elem_count == 0 or m < 2 or not -1 <= max_level <= MAX_LEVEL:
        raise CorruptStore("index header has invalid fields")
    if expected_key is not None and elem_count != expected_key:
        raise CorruptStore(f"index file holds key {elem_count}, expected {expected_key}")
    body = memoryview(data)[HEADER_SIZE:]
    if zlib.crc32(body) != body_crc:
        raise CorruptStore("index body checksum mismatch")
    dtype = _vertex_dtype(elem_count)
    if n * dtype.itemsize > len(body):
        raise CorruptStore("index vertex table is truncated")
    table = np.frombuffer(body, dtype, count=n)

    index = HnswIndex(elem_count, m, ef_c, ef_s, seed, capacity=max(1, n))
    index.count = n
    index.entry = entry
    index.max_level = max_level
    index.codes[:n] = table["codes"]
    index.scales[:n] = table["scale"]
    index.mins[:n] = table["min"]
    pos = n * dtype.itemsize
    try:
        for v in range(n):
            (level,) = struct.unpack_from("<B", body, pos)
            pos += 1
            if level > MAX_LEVEL:
                raise CorruptStore(f"vertex {v} has level {level}")
            index.levels[v] = level
            for layer in range(level + 1):
                (cnt,) = struct.unpack_from("<H", body, pos)
                pos += 2
                if cnt > index.m0:
                    raise CorruptStore(f"vertex {v} has {cnt} links")
                ids = np.frombuffer(body, "<u4", count=cnt, offset=pos)
                pos += 4 * cnt
                index.links[v, layer, :cnt] = ids
                index.counts[v, layer] = cnt
    except struct.error as exc:
        raise CorruptStore("index link table is truncated") from exc
    except ValueError as exc:
        raise CorruptStore(f"index link table is malformed: {exc}") from exc
    if pos != len(body):
        raise CorruptStore("trailing bytes after index link table")
    if not (np.isfinite(index.scales[:n]).all() and (index.scales[:n] > 0).all()
            and np.isfinite(index.mins[:n]).all()):
        raise CorruptStore("index holds invalid quantization parameters")
    index.check()
    return index
