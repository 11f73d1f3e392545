"""Synthetic fine-tune families for desk-scale experiments.

Every family starts from one shared root network: a family's base is the
root plus a small uniform offset, and each member perturbs a random subset
of the family base's layers by uniform noise of half-width ``sigma``.
Within a family, unperturbed layers are byte-identical across members.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .graph import ModelGraph, mlp_graph
from .modelio import read_model, write_model
from .types import Tensor

MANIFEST = "manifest.json"


@dataclass(frozen=True)
class CorpusSpec:
    families: int = 5
    models_per_family: int = 10
    layer_sizes: tuple[int, ...] = (64, 128, 64, 16)
    sigma: float = 0.02
    fraction: float = 0.5
    seed: int = 0
    family_spread: float = 0.05

    def __post_init__(self):
        if self.families < 1 or self.models_per_family < 1:
            raise InvalidArgument("a corpus needs at least one family and one model per family")
        if len(self.layer_sizes) < 2 or any(int(s) < 1 for s in self.layer_sizes):
            raise InvalidArgument(f"invalid layer sizes {self.layer_sizes}")
        if self.sigma < 0 or self.family_spread < 0:
            raise InvalidArgument("sigma and family_spread must be non-negative")
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidArgument(f"fraction must be within [0, 1], got {self.fraction}")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))


@dataclass
class CorpusModel:
    name: str
    family: int
    graph: ModelGraph
    tensors: list[Tensor]


def _uniform(rng, half_width, shape):
    return rng.uniform(-half_width, half_width, size=shape)


def generate(spec: CorpusSpec) -> list[CorpusModel]:
    """Models in family-major order; same spec gives bitwise-identical output."""
    graph = mlp_graph(spec.layer_sizes)
    names = list(graph.initializers)
    shapes = list(graph.initializers.values())
    rng = np.random.default_rng(spec.seed)
    root = [_uniform(rng, 1.0, s) for s in shapes]
    models = []
    for f in range(spec.families):
        base = [r + _uniform(rng, spec.family_spread, r.shape) for r in root]
        for m in range(spec.models_per_family):
            picks = rng.random(len(names)) < spec.fraction
            tensors = []
            for name, w, pick in zip(names, base, picks):
                if pick:
                    w = w + _uniform(rng, spec.sigma, w.shape)
                tensors.append(Tensor.from_array(name, w.astype(np.float32)))
            models.append(CorpusModel(f"family{f}-model{m}", f, graph, tensors))
    return models


def write_corpus(spec: CorpusSpec, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths, entries = [], []
    for model in generate(spec):
        path = directory / f"{model.name}.graph"
        write_model(path, model.graph, {t.name: t.array() for t in model.tensors})
        paths.append(path)
        entries.append({"name": model.name, "family": model.family, "file": path.name})
    doc = {"spec": asdict(spec), "models": entries}
    (directory / MANIFEST).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return paths


def read_corpus(directory) -> list[CorpusModel]:
    directory = Path(directory)
    try:
        doc = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        entries = doc["models"]
    except (OSError, ValueError, KeyError) as exc:
        raise InvalidArgument(f"{directory} has no readable corpus manifest") from exc
    models = []
    for e in entries:
        graph, tensors = read_model(directory / e["file"])
        models.append(CorpusModel(e["name"], int(e["family"]), graph, tensors))
    return models
