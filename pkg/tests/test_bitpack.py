import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deltastore import bitpack
from deltastore._jit import HAVE_NUMBA
from deltastore.errors import InvalidArgument

from . import oracles

IMPLS = [("numpy", bitpack.pack_bits_numpy, bitpack.unpack_bits_numpy)]
if HAVE_NUMBA:
    IMPLS.append(("numba", bitpack.pack_bits_numba, bitpack.unpack_bits_numba))


@st.composite
def code_arrays(draw, max_size=300):
    nbit = draw(st.integers(1, 32))
    codes = draw(st.lists(st.integers(0, (1 << nbit) - 1), max_size=max_size))
    return nbit, codes


def test_layout_is_lsb_first_little_endian():
    # 3-bit codes 1, 2, 7 -> bits 100 010 111 (LSB first) -> 0b11_010_001, 0b1
    assert bitpack.pack_bits([1, 2, 7], 3) == bytes([0b11010001, 0b00000001])
    assert bitpack.pack_bits([0xABCD], 16) == b"\xcd\xab"
    assert bitpack.pack_bits([1], 1) == b"\x01"
    assert bitpack.pack_bits([], 5) == b""


@given(code_arrays())
@settings(max_examples=300)
def test_pack_matches_integer_oracle(case):
    nbit, codes = case
    payload = bitpack.pack_bits(np.array(codes, np.uint64), nbit)
    assert payload == oracles.pack(codes, nbit)
    assert len(payload) == bitpack.packed_size(len(codes), nbit)
    assert bitpack.unpack_bits(payload, len(codes), nbit).tolist() == codes


@pytest.mark.parametrize("name,pack,unpack", IMPLS)
@given(case=code_arrays())
@settings(max_examples=150)
def test_both_implementations_round_trip(name, pack, unpack, case):
    nbit, codes = case
    arr = np.array(codes, np.uint64)
    out = pack(arr, nbit)
    assert out.tobytes() == oracles.pack(codes, nbit)
    assert unpack(out, len(codes), nbit).tolist() == codes


@pytest.mark.parametrize("nbit", [3, 8, 13, 16, 17, 32])
def test_implementations_agree_across_chunks(nbit):
    rng = np.random.default_rng(nbit)
    n = 3 * (1 << 16) + 11  # crosses the numpy chunk size
    codes = rng.integers(0, 1 << nbit, size=n, dtype=np.uint64)
    ref = bitpack.pack_bits_numpy(codes, nbit)
    for _, pack, unpack in IMPLS:
        assert np.array_equal(pack(codes, nbit), ref)
        assert np.array_equal(unpack(ref, n, nbit), codes.astype(np.uint32))


def test_padding_bits_are_zero():
    payload = bitpack.pack_bits([0b11111] * 3, 5)
    assert payload[-1] >> 7 == 0  # 15 bits used of 16


def test_invalid_widths_and_codes():
    with pytest.raises(InvalidArgument):
        bitpack.pack_bits([1], 0)
    with pytest.raises(InvalidArgument):
        bitpack.pack_bits([1], 33)
    with pytest.raises(InvalidArgument):
        bitpack.pack_bits([8], 3)
    with pytest.raises(InvalidArgument):
        bitpack.unpack_bits(b"\x00", 3, 8)
