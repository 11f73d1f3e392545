"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--vectors 2000] [--dim 1024]

Both flavours are imported directly, so the ``DELTASTORE_DISABLE_JIT`` flag
does not matter here. Numba compile time is excluded by a warm-up call. Each
row also checks that the two flavours agree: integer outputs exactly, float
outputs to a relative 1e-12.
"""

import argparse
import time

import numpy as np

from deltastore import bitpack
from deltastore.quantizer import quantize_base
from deltastore.similarity import HnswIndex
from deltastore.similarity import _kernels as k


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":  # summation order differs between the flavours
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-12, atol=0)
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--vectors", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=1024)
    ap.add_argument("--elements", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    codes = rng.integers(0, 2**13, args.elements).astype(np.uint32)
    packed = bitpack.pack_bits_numpy(codes, 13)

    index = HnswIndex(args.dim)
    for v in rng.uniform(-1, 1, size=(args.vectors, args.dim)):
        index.add(quantize_base(v))
    q = rng.uniform(-1, 1, args.dim)
    ids = np.arange(index.count, dtype=np.int64)
    entries = np.array([index.entry], dtype=np.int64)
    tables = (index.codes, index.scales, index.mins)
    layer_args = (q, *tables, index.links, index.counts, 0, index.count, entries, 256)

    cases = [
        (f"pack 13-bit x{args.elements}", bitpack.pack_bits_numba, bitpack.pack_bits_numpy, (codes, 13)),
        (f"unpack 13-bit x{args.elements}", bitpack.unpack_bits_numba, bitpack.unpack_bits_numpy,
         (packed, args.elements, 13)),
        (f"distances {args.vectors}x{args.dim}", k.distances_numba, k.distances_numpy, (q, *tables, ids)),
        ("search_layer ef=256", k.search_layer_numba, k.search_layer_numpy, layer_args),
    ]
    print(f"{'kernel':<32}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  match")
    for name, fast, slow, a in cases:
        tf, of = best_of(lambda: fast(*a), args.repeat)
        ts, os_ = best_of(lambda: slow(*a), args.repeat)
        print(f"{name:<32}{tf * 1e3:>10.3f}{ts * 1e3:>10.3f}{ts / tf:>8.1f}x  {same(of, os_)}")


if __name__ == "__main__":
    main()
