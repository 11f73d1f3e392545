import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from deltastore.errors import InvalidTensor, ShapeMismatch, ToleranceTooTight
from deltastore.quantizer import (bits_saved, compute_nbit, delta_encode, dequantize_base,
                                  dequantize_delta, quantize_base, quantize_delta, truncate_msb,
                                  truncation_bound)
from deltastore.types import INLINE, QuantParams

from . import oracles

P = 2.0**-24


# -- base quantization -------------------------------------------------------

def test_base_examples():
    qb = quantize_base([0.0, 0.5, 1.0])
    assert qb.params == QuantParams(1 / 255, 0.0)
    assert qb.codes.tolist() == [0, 128, 255]
    assert np.allclose(dequantize_base(qb), [0.0, 128 / 255, 1.0], rtol=0, atol=1e-15)

    const = quantize_base([3.0, 3.0])
    assert const.params == QuantParams(1.0, 3.0)
    assert const.codes.tolist() == [0, 0]
    assert dequantize_base(const).tolist() == [3.0, 3.0]

    sym = quantize_base([-1.0, 1.0])
    assert sym.params.scale == 2 / 255
    assert sym.codes.tolist() == [0, 255]


def test_base_rejects_empty():
    with pytest.raises(InvalidTensor):
        quantize_base([])


@given(hnp.arrays(np.float32, st.integers(1, 200), elements=st.floats(-100, 100, width=32)))
@settings(max_examples=200)
def test_base_codes_match_exact_oracle(x):
    qb = quantize_base(x)
    codes, s, lo = oracles.base_codes(x)
    assert qb.params.delta_min == float(lo)
    assert math.isclose(qb.params.scale, float(s), rel_tol=1e-15)
    # float64 division may land a hair off an exact .5 boundary; allow that only there
    diff = np.abs(qb.codes.astype(int) - np.array(codes))
    assert diff.max() <= 1
    if diff.any():
        q = (x.astype(np.float64) - lo.numerator / lo.denominator) / qb.params.scale
        frac = q - np.floor(q)
        assert np.all(np.abs(frac[diff > 0] - 0.5) < 1e-9)


@given(hnp.arrays(np.float32, st.integers(1, 500), elements=st.floats(-10, 10, width=32)))
def test_base_round_trip_within_half_step(x):
    qb = quantize_base(x)
    err = np.abs(dequantize_base(qb) - x.astype(np.float64))
    assert err.max() <= qb.params.scale / 2 * (1 + 1e-9) + 1e-12


# -- delta encoding ----------------------------------------------------------

def test_delta_encode_examples():
    base = np.array([0.25, -1.0, 3.0])
    d = delta_encode(base, base)
    assert d.range == 0 and not d.values.any()
    shifted = delta_encode(base + 0.001, base)
    assert np.allclose(shifted.values, 0.001, rtol=0, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        delta_encode([1.0, 2.0], [1.0])


@given(hnp.arrays(np.float32, 50, elements=st.floats(-1, 1, width=32)),
       hnp.arrays(np.float64, 50, elements=st.floats(-1, 1)))
def test_delta_reconstruction_identity(t, base):
    d = delta_encode(t, base)
    # float32 values minus float64 bases in [-1, 1] are exact in float64 up to one rounding
    assert np.all(np.abs(base + d.values - t.astype(np.float64)) <= np.spacing(2.0))
    assert d.lo == d.values.min() and d.hi == d.values.max()


# -- nbit --------------------------------------------------------------------

def test_nbit_examples():
    assert compute_nbit(0.0078, P) == 16
    assert compute_nbit(0.0, P) == 1
    # 2**23 + 1 bins: the formula needs 24 bits here
    assert compute_nbit(1.0, P) == oracles.nbit(1.0, P) == 24
    assert compute_nbit(2 * P, P) == 1
    assert compute_nbit(4 * P, P) == 2


def test_nbit_too_tight():
    with pytest.raises(ToleranceTooTight):
        compute_nbit(1.0, 1e-12)
    assert compute_nbit(2.0**32 * 2 * P - 2 * P, P) == 32


@given(st.floats(0, 100), st.floats(1e-9, 1e-2))
@settings(max_examples=300)
def test_nbit_matches_oracle_and_is_minimal(r, p):
    want = oracles.nbit(r, p)
    if want > 32:
        with pytest.raises(ToleranceTooTight):
            compute_nbit(r, p)
        return
    n = compute_nbit(r, p)
    assert n == want
    bins = math.floor(r / (2 * p)) + 1
    assert bins <= 2**n
    assert n == 1 or 2 ** (n - 1) < bins


@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-7, 1e-3))
def test_nbit_monotone(a, b, p):
    lo, hi = sorted((a, b))
    assert compute_nbit(lo, p) <= compute_nbit(hi, p)
    assert compute_nbit(hi, p) >= compute_nbit(hi, p * 2)


# -- delta quantization ------------------------------------------------------

def test_quantize_delta_examples_min_anchored():
    qd = quantize_delta([-P, 0.0, P], P, INLINE, (3,), centered=False)
    assert qd.nbit == 1
    assert qd.codes().tolist() == [0, 0, 1]
    rec = dequantize_delta(qd)
    assert rec.tolist() == [0.0, 0.0, 2 * P]
    assert np.abs(rec - [-P, 0.0, P]).max() == P

    const = quantize_delta([0.3] * 4, P, INLINE, (2, 2), centered=False)
    assert const.nbit == 1 and not const.codes().any()

    span = quantize_delta([0.0, 2 * P, 4 * P], P, INLINE, (3,), centered=False)
    assert span.nbit == 2
    assert set(span.codes().tolist()) <= {0, 1, 2}


def test_dequantize_all_zero_codes():
    qd = quantize_delta([0.0] * 5, P, INLINE, (5,), centered=False)
    assert qd.params.delta_min == 0.0
    assert np.all(dequantize_delta(qd) == P)


def test_quantize_delta_shape_check():
    with pytest.raises(ShapeMismatch):
        quantize_delta([0.0, 1.0], P, INLINE, (3,))


@pytest.mark.parametrize("centered", [True, False])
def test_round_trip_bound_large(centered):
    rng = np.random.default_rng(7)
    d = rng.uniform(-0.01, 0.01, size=200_000)
    qd = quantize_delta(d, P, INLINE, d.shape, centered=centered)
    assert np.abs(dequantize_delta(qd) - d).max() <= P


@given(hnp.arrays(np.float64, st.integers(1, 400), elements=st.floats(-0.05, 0.05)),
       st.sampled_from([2.0**-24, 1e-7, 1e-6, 1e-5]))
@settings(max_examples=200)
def test_round_trip_bound(d, p):
    qd = quantize_delta(d, p, INLINE, d.shape)
    assert qd.nbit == oracles.nbit(float(d.max() - d.min()), p)
    assert int(qd.codes().max()) < 2**qd.nbit
    assert np.abs(dequantize_delta(qd) - d).max() <= p


@given(hnp.arrays(np.float32, st.integers(1, 300), elements=st.floats(-2, 2, width=32)),
       st.floats(-0.1, 0.1))
@settings(max_examples=200)
def test_end_to_end_bound_against_dequantized_base(t, shift):
    # base quantized from a shifted copy: its own error must not leak into the result
    qb = quantize_base(t.astype(np.float64) + shift)
    base = dequantize_base(qb)
    d = delta_encode(t, base)
    qd = quantize_delta(d.values, P, INLINE, t.shape, target=t, base_full=base)
    assert np.abs(base + dequantize_delta(qd) - t.astype(np.float64)).max() <= P


# -- truncation --------------------------------------------------------------

def test_truncate_example():
    d = np.array([0.0, 0xABCD * 2 * P, 0xFFFF * 2 * P])
    qd = quantize_delta(d, P, INLINE, (3,), centered=False)
    assert qd.nbit == 16 and qd.codes()[1] == 0xABCD
    t8 = truncate_msb(qd, 8)
    assert t8.nbit == 8
    assert t8.codes()[1] == 0xAB
    assert t8.params.scale == qd.params.scale * 256
    assert len(t8.payload) * 2 == len(qd.payload)
    full, short = dequantize_delta(qd), dequantize_delta(t8)
    assert np.all(np.abs(full - short) < t8.params.scale)


def test_truncate_identity_when_narrow():
    qd8 = quantize_delta(np.arange(200) * 2 * P, P, INLINE, (200,))
    assert qd8.nbit == 8 and truncate_msb(qd8, 8) is qd8
    qd4 = quantize_delta(np.arange(10) * 2 * P, P, INLINE, (10,))
    assert qd4.nbit == 4 and truncate_msb(qd4, 8) is qd4


@given(hnp.arrays(np.float64, st.integers(1, 300), elements=st.floats(-0.01, 0.01)),
       st.integers(1, 12))
@settings(max_examples=150)
def test_truncation_bound(d, b):
    qd = quantize_delta(d, P, INLINE, d.shape)
    tq = truncate_msb(qd, b)
    assert tq.nbit == min(b, qd.nbit)
    err = np.abs(dequantize_delta(tq) - d).max()
    assert err <= truncation_bound(P, qd.nbit, b)


def test_bits_saved():
    assert [bits_saved(n) for n in (4, 8, 9, 17, 32)] == [0, 0, 1, 9, 24]
