import os
import random
import stat
import struct
from pathlib import Path

import numpy as np
import pytest

from deltastore.errors import CorruptStore, PageSealed, UnsupportedVersion
from deltastore.quantizer import quantize_delta
from deltastore.similarity import dump_index, load_index
from deltastore.storage import TensorPage, write_page
from deltastore.storage.pages import (DeltaRecord, decode_record, encode_record, header_size,
                                      read_page_bytes)
from deltastore.types import BaseRef

from .golden.make_golden import golden_index, golden_page_bytes, golden_records

GOLDEN = Path(__file__).parent / "golden"


def random_record(rng, i):
    shape = tuple(int(d) for d in rng.integers(1, 9, size=rng.integers(1, 4)))
    d = rng.uniform(-1, 1, size=shape) * 10.0 ** -rng.integers(1, 6)
    p = float(rng.choice([2.0**-24, 1e-6, 1e-4]))
    return DeltaRecord(f"t{i}", quantize_delta(d, p, BaseRef(int(np.prod(shape)), i), shape))


def test_zero_records(tmp_path):
    size = write_page([], tmp_path / "empty.nspg")
    page = TensorPage(tmp_path / "empty.nspg")
    assert len(page) == 0 and size == header_size(0) == 10
    assert page.read_all() == []


def test_one_record_round_trip(tmp_path):
    rec = random_record(np.random.default_rng(0), 0)
    write_page([rec], tmp_path / "one.nspg")
    back = TensorPage(tmp_path / "one.nspg").read_record(0)
    assert back.same_as(rec)
    assert encode_record(back) == encode_record(rec)


def test_many_records_random_access(tmp_path):
    rng = np.random.default_rng(1)
    recs = [random_record(rng, i) for i in range(500)]
    size = write_page(recs, tmp_path / "many.nspg")
    assert size == header_size(500) + sum(len(encode_record(r)) for r in recs)
    assert size == os.path.getsize(tmp_path / "many.nspg")
    page = TensorPage(tmp_path / "many.nspg")
    order = list(range(500))
    random.Random(2).shuffle(order)
    for i in order:
        assert page.read_record(i).same_as(recs[i])
    assert all(a.same_as(b) for a, b in zip(page.read_all(), recs))
    assert page.base_refs() == [r.delta.base for r in recs]


def test_out_of_range_access(tmp_path):
    write_page([random_record(np.random.default_rng(3), 0)], tmp_path / "p.nspg")
    page = TensorPage(tmp_path / "p.nspg")
    with pytest.raises(IndexError):
        page.read_record(1)
    with pytest.raises(IndexError):
        page.read_record(-1)


def test_pages_are_sealed(tmp_path):
    path = tmp_path / "s.nspg"
    write_page([], path)
    assert not os.stat(path).st_mode & (stat.S_IWUSR | stat.S_IWGRP | stat.S_IWOTH)
    with pytest.raises(PageSealed):
        write_page([], path)
    assert not list(tmp_path.glob("*.tmp"))


def test_record_validation():
    rec = random_record(np.random.default_rng(4), 0)
    blob = encode_record(rec)
    with pytest.raises(CorruptStore):
        decode_record(blob[:-1])
    with pytest.raises(CorruptStore):
        decode_record(blob + b"\0")
    with pytest.raises(CorruptStore):
        decode_record(b"\xff\xff\xff\xff")


def test_header_offset_tampering(tmp_path):
    rng = np.random.default_rng(5)
    write_page([random_record(rng, i) for i in range(3)], tmp_path / "t.nspg")
    data = bytearray((tmp_path / "t.nspg").read_bytes())
    off = struct.unpack_from("<Q", data, 10 + 16)[0]
    struct.pack_into("<Q", data, 10 + 16, off + 1)
    with pytest.raises(CorruptStore):
        read_page_bytes(bytes(data))


def test_unsupported_version():
    data = bytearray(golden_page_bytes())
    data[4:6] = struct.pack("<H", 2)
    with pytest.raises(UnsupportedVersion):
        read_page_bytes(bytes(data))


def test_golden_page_is_stable(tmp_path):
    committed = (GOLDEN / "page_v1.nspg").read_bytes()
    assert golden_page_bytes() == committed
    write_page(golden_records(), tmp_path / "g.nspg")
    assert (tmp_path / "g.nspg").read_bytes() == committed
    recs = read_page_bytes(committed)
    assert [r.name for r in recs] == ["W0", "b0", "emb"]
    assert all(a.same_as(b) for a, b in zip(recs, golden_records()))
    assert recs[1].delta.base.is_inline


def test_golden_index_is_stable():
    committed = (GOLDEN / "index_v1.nsix").read_bytes()
    assert dump_index(golden_index()) == committed
    index = load_index(committed, expected_key=16)
    assert len(index) == 40
    assert dump_index(index) == committed


def test_page_header_fuzz_on_disk(tmp_path):
    committed = (GOLDEN / "page_v1.nspg").read_bytes()
    head = header_size(3)
    rnd = random.Random(6)
    for k in range(200):
        buf = bytearray(committed)
        buf[rnd.randrange(head)] ^= rnd.randrange(1, 256)
        path = tmp_path / f"f{k}.nspg"
        path.write_bytes(bytes(buf))
        with pytest.raises(CorruptStore):
            TensorPage(path).read_all()
