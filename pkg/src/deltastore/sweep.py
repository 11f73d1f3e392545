"""Parameter sweeps: rebuild a store from empty for every value and measure it."""

from __future__ import annotations

import csv
import io
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .compressor import SaveRequest, compress_model
from .corpus import CorpusModel
from .errors import InvalidArgument
from .stats import collect
from .storage import ModelStore
from .types import DEFAULT_TAU, DEFAULT_TOLERANCE, check_tau, check_tolerance

PARAMS = ("tau", "tolerance")


@dataclass
class SweepPoint:
    param: str
    value: float
    ratio: float
    original_bytes: int
    delta_bytes: int
    index_bytes: int
    vertices: int
    mean_bits_saved: float
    seconds: float

    @property
    def throughput(self) -> float:
        """Original megabytes saved per second."""
        return self.original_bytes / 1e6 / self.seconds if self.seconds > 0 else 0.0


def sweep(models: Sequence[CorpusModel], param: str, values: Sequence[float], *,
          tolerance: float = DEFAULT_TOLERANCE, tau: float = DEFAULT_TAU,
          threads: int = 1, seed: int = 0, workdir=None) -> list[SweepPoint]:
    if param not in PARAMS:
        raise InvalidArgument(f"can only sweep {PARAMS}, not {param!r}")
    if not values:
        raise InvalidArgument("sweep needs at least one value")
    check = check_tau if param == "tau" else check_tolerance
    values = [check(float(v)) for v in values]
    points = []
    for value in values:
        root = Path(tempfile.mkdtemp(prefix="sweep-", dir=workdir))
        try:
            store = ModelStore(root, seed=seed)
            kw = {"tolerance": tolerance, "tau": tau, param: value}
            start = time.perf_counter()
            for m in models:
                compress_model(SaveRequest(m.name, m.graph, m.tensors, **kw), store, threads)
            seconds = time.perf_counter() - start
            st = collect(store)
        finally:
            shutil.rmtree(root, ignore_errors=True)
        points.append(SweepPoint(param, value, st.ratio, st.original_bytes, st.delta_bytes,
                                 st.index_bytes, st.vertices, float(st.mean_bits_saved()), seconds))
    return points


def to_csv(points: Sequence[SweepPoint], timing: bool = True) -> str:
    buf = io.StringIO()
    cols = ["param", "value", "ratio", "original_bytes", "delta_bytes", "index_bytes",
            "vertices", "mean_bits_saved"]
    if timing:
        cols += ["seconds", "throughput_mb_s"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for p in points:
        row = [p.param, repr(p.value), f"{p.ratio:.6f}", p.original_bytes, p.delta_bytes,
               p.index_bytes, p.vertices, f"{p.mean_bits_saved:.6f}"]
        if timing:
            row += [f"{p.seconds:.3f}", f"{p.throughput:.3f}"]
        w.writerow(row)
    return buf.getvalue()
