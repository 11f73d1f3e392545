"""Command line interface.

Output is line-oriented ``key=value`` text. Exit codes: 0 ok, 2 user error,
3 corrupt store, 4 tolerance too tight.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import loader
from .compressor import SaveRequest, compress_model
from .corpus import CorpusSpec, read_corpus, write_corpus
from .errors import CorruptStore, DeltaStoreError, ToleranceTooTight
from .modelio import read_model
from .stats import collect
from .storage import ModelStore
from .sweep import sweep, to_csv
from .types import DEFAULT_TAU, DEFAULT_TOLERANCE, check_tau, check_tolerance

EXIT_OK, EXIT_USER, EXIT_CORRUPT, EXIT_TOLERANCE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _checked(check):
    def parse(text):
        try:
            return check(float(text))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _bits(text):
    try:
        return loader.parse_bits(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _model_ref(text):
    return int(text) if text.isdigit() else text


def _emit(out, **pairs):
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}={v}", file=out)


def _store(args, must_exist=True) -> ModelStore:
    root = Path(args.store)
    if must_exist and not (root / "catalog.json").exists() and not root.is_dir():
        raise UsageError(f"store {root} does not exist")
    return ModelStore(root, seed=args.seed)


def cmd_save(args, out):
    graph, tensors = read_model(args.model)
    name = args.name or Path(args.model).stem
    req = SaveRequest(name, graph, tensors, args.tolerance, args.tau)
    start = time.perf_counter()
    report = compress_model(req, _store(args, must_exist=False), threads=args.threads)
    _emit(out, model=report.name, id=report.model_id, tolerance=f"{report.tolerance:.3g}",
          tau=f"{report.tau:.3g}", tensors=len(report.tensors), new_vertices=report.new_vertices,
          original_bytes=report.original_bytes, stored_bytes=report.stored_bytes,
          index_bytes=f"{report.index_bytes:.1f}", ratio=f"{report.ratio:.4f}",
          seconds=f"{time.perf_counter() - start:.3f}")
    for nbit, count in report.nbit_histogram().items():
        print(f"nbit[{nbit}]={count}", file=out)


def cmd_load(args, out):
    start = time.perf_counter()
    lm = loader.load_model(_store(args), _model_ref(args.model), args.bits)
    _emit(out, model=lm.entry.name, bits=args.bits or "FULL", tensors=len(lm.deltas),
          bases=len(lm.bases), payload_bytes=lm.payload_bytes, resident_bytes=lm.resident_bytes,
          seconds=f"{time.perf_counter() - start:.3f}")


def _inputs(args, graph):
    if args.input:
        try:
            x = np.load(args.input, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read input {args.input}: {exc}") from exc
        if len(graph.input_names) != 1:
            raise UsageError("an input file can only feed a single-input graph")
        return {graph.input_names[0]: x}
    rng = np.random.default_rng(args.seed)
    feeds = {}
    for node in graph.nodes:
        if node.op == "Input":
            shape = [args.batch if d == -1 else d for d in node.attrs.get("shape", [args.batch])]
            feeds[node.output] = rng.uniform(-1.0, 1.0, size=shape)
    return feeds


def cmd_infer(args, out):
    store = _store(args)
    ref = _model_ref(args.model)
    lm = loader.load_model(store, ref, args.bits)
    feeds = _inputs(args, lm.graph)
    start = time.perf_counter()
    outputs = loader.pipelined_load_execute(store, ref, args.bits, feeds)
    seconds = time.perf_counter() - start
    full = lm if args.bits is None else loader.load_model(store, ref, loader.FULL)
    reference = outputs if args.bits is None else loader.pipelined_load_execute(
        store, ref, loader.FULL, feeds)
    delta = max((float(np.max(np.abs(outputs[k] - reference[k]))) if outputs[k].size else 0.0)
                for k in outputs)
    _emit(out, model=lm.entry.name, bits=args.bits or "FULL", resident_bytes=lm.resident_bytes,
          resident_bytes_full=full.resident_bytes,
          max_delta_vs_full=f"{delta:.6g}", seconds=f"{seconds:.3f}")
    for k, v in outputs.items():
        _emit(out, **{f"output[{k}].shape": "x".join(map(str, v.shape))})
    if args.output:
        np.save(args.output, next(iter(outputs.values())))


def cmd_stats(args, out):
    root = Path(args.store)
    st = collect(ModelStore(root, seed=args.seed)) if root.exists() else None
    if st is None or not st.models:
        _emit(out, models=0, original_bytes=0, delta_bytes=0,
              index_bytes=0 if st is None else st.index_bytes,
              vertices=0 if st is None else st.vertices, records=0, mean_bits_saved="0",
              ratio=f"{1.0:.4f}")
        return
    mbs = st.mean_bits_saved(8)
    _emit(out, models=len(st.models), original_bytes=st.original_bytes, delta_bytes=st.delta_bytes,
          index_bytes=st.index_bytes, vertices=st.vertices, records=st.records,
          mean_bits_saved=f"{mbs.numerator}/{mbs.denominator}",
          mean_bits_saved_float=f"{float(mbs):.4f}", ratio=f"{st.ratio:.4f}")
    for nbit, count in st.nbit_histogram().items():
        print(f"nbit[{nbit}]={count}", file=out)
    for m in st.models:
        print(f"model[{m.name}].ratio={m.ratio:.4f}", file=out)
    for r, frac in st.ratio_cdf():
        print(f"cdf={r:.4f},{frac:.4f}", file=out)


def cmd_gen_corpus(args, out):
    spec = CorpusSpec(args.families, args.models_per_family, args.layers, args.sigma,
                      args.fraction, args.seed, args.spread)
    paths = write_corpus(spec, args.out)
    _emit(out, models=len(paths), directory=args.out)


def cmd_sweep(args, out):
    models = read_corpus(args.corpus)
    points = sweep(models, args.param, args.values, tolerance=args.tolerance, tau=args.tau,
                   threads=args.threads, seed=args.seed)
    text = to_csv(points, timing=not args.no_timing)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", default="deltastore-data", help="store directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deltastore", description="Delta-quantized model store.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("save", parents=[common], help="compress and store a model")
    s.add_argument("model", help="model graph document (weights in the .bin sidecar)")
    s.add_argument("--name")
    s.add_argument("--tolerance", type=_checked(check_tolerance), default=DEFAULT_TOLERANCE)
    s.add_argument("--tau", type=_checked(check_tau), default=DEFAULT_TAU)
    s.set_defaults(func=cmd_save)

    s = sub.add_parser("load", parents=[common], help="load a model and report its footprint")
    s.add_argument("model", help="model name or id")
    s.add_argument("--bits", type=_bits, default=8, help="delta bits to load, or FULL")
    s.set_defaults(func=cmd_load)

    s = sub.add_parser("infer", parents=[common], help="run a stored model")
    s.add_argument("model", help="model name or id")
    s.add_argument("--bits", type=_bits, default=8, help="delta bits to load, or FULL")
    s.add_argument("--input", help=".npy input (random batch when omitted)")
    s.add_argument("--batch", type=int, default=4)
    s.add_argument("--output", help="write the first output as .npy")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("stats", parents=[common], help="store-wide storage report")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("gen-corpus", parents=[common], help="write a synthetic model corpus")
    s.add_argument("out")
    s.add_argument("--families", type=int, default=5)
    s.add_argument("--models-per-family", type=int, default=10)
    s.add_argument("--layers", type=_ints, default=(64, 128, 64, 16))
    s.add_argument("--sigma", type=float, default=0.02)
    s.add_argument("--fraction", type=float, default=0.5)
    s.add_argument("--spread", type=float, default=0.05)
    s.set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("sweep", parents=[common], help="ratio and throughput per parameter value")
    s.add_argument("--corpus", required=True)
    s.add_argument("--param", choices=("tau", "tolerance"), required=True)
    s.add_argument("--values", type=_floats, required=True)
    s.add_argument("--tolerance", type=_checked(check_tolerance), default=DEFAULT_TOLERANCE)
    s.add_argument("--tau", type=_checked(check_tau), default=DEFAULT_TAU)
    s.add_argument("--csv", help="write CSV here instead of stdout")
    s.add_argument("--no-timing", action="store_true", help="omit timing columns")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args, out)
    except ToleranceTooTight as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except CorruptStore as exc:
        print(f"error: corrupt store: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (DeltaStoreError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
