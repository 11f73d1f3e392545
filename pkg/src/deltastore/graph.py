"""Model architecture as a named-node computation graph.

Document format (JSON, UTF-8)::

    {
      "format": "deltastore.graph",
      "version": 1,
      "initializers": [{"name": "W0", "shape": [4, 8]}, ...],
      "nodes": [
        {"id": "x", "op": "Input", "inputs": [], "output": "x", "attrs": {"shape": [-1, 4]}},
        {"id": "mm0", "op": "MatMul", "inputs": ["x", "W0"], "output": "h0", "attrs": {}},
        ...
        {"id": "y", "op": "Output", "inputs": ["h1"], "output": "y", "attrs": {}}
      ]
    }

Every value name is produced exactly once, either as an initializer or as a
node output. ``Output`` nodes re-export their single input under their own
output name. ``Constant`` nodes carry ``attrs.value`` (flat list) and
``attrs.shape``. ``DequantizeLinear`` nodes only appear in augmented graphs
and carry ``attrs.tensor`` (initializer name) and ``attrs.part``
(``"base"`` or ``"delta"``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import GraphError

FORMAT = "deltastore.graph"
VERSION = 1

ARITY = {
    "Input": 0,
    "Output": 1,
    "MatMul": 2,
    "Add": 2,
    "Relu": 1,
    "Sigmoid": 1,
    "Constant": 0,
    "DequantizeLinear": 0,
}


@dataclass(frozen=True)
class Node:
    id: str
    op: str
    inputs: tuple[str, ...]
    output: str
    attrs: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {"id": self.id, "op": self.op, "inputs": list(self.inputs),
                "output": self.output, "attrs": self.attrs}


@dataclass
class ModelGraph:
    nodes: list[Node]
    initializers: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.initializers = {k: tuple(int(d) for d in v) for k, v in self.initializers.items()}
        self._order = self._validate()

    def _validate(self) -> list[Node]:
        ids = set()
        producers: dict[str, str] = {}
        for name, shape in self.initializers.items():
            if not shape or any(d <= 0 for d in shape):
                raise GraphError(f"initializer {name!r} has invalid shape {shape}")
            producers[name] = "<initializer>"
        for node in self.nodes:
            if node.op not in ARITY:
                raise GraphError(f"unknown op {node.op!r}", node.id)
            if node.id in ids:
                raise GraphError("duplicate node id", node.id)
            ids.add(node.id)
            if len(node.inputs) != ARITY[node.op]:
                raise GraphError(f"{node.op} takes {ARITY[node.op]} inputs, got {len(node.inputs)}",
                                 node.id)
            if node.output in producers:
                raise GraphError(f"value {node.output!r} is produced more than once", node.id)
            producers[node.output] = node.id
            if node.op == "DequantizeLinear" and node.attrs.get("part") not in ("base", "delta"):
                raise GraphError("DequantizeLinear needs attrs.part of 'base' or 'delta'", node.id)
            if node.op == "Constant":
                shape = node.attrs.get("shape")
                value = node.attrs.get("value")
                if shape is None or value is None or math.prod(shape) != len(value):
                    raise GraphError("Constant needs a value matching its shape", node.id)
        for node in self.nodes:
            for name in node.inputs:
                if name not in producers:
                    raise GraphError(f"input {name!r} is never produced", node.id)
        if not any(n.op == "Output" for n in self.nodes):
            raise GraphError("graph has no Output node")
        return self._toposort(producers)

    def _toposort(self, producers) -> list[Node]:
        by_id = {n.id: n for n in self.nodes}
        pending = {n.id: sum(1 for i in n.inputs if producers[i] != "<initializer>") for n in self.nodes}
        consumers: dict[str, list[str]] = {}
        for n in self.nodes:
            for i in n.inputs:
                if producers[i] != "<initializer>":
                    consumers.setdefault(producers[i], []).append(n.id)
        position = {n.id: k for k, n in enumerate(self.nodes)}
        ready = sorted((nid for nid, c in pending.items() if c == 0), key=position.get)
        order = []
        while ready:
            nid = ready.pop(0)
            order.append(by_id[nid])
            released = []
            for c in consumers.get(nid, []):
                pending[c] -= 1
                if pending[c] == 0:
                    released.append(c)
            ready = sorted(ready + released, key=position.get)
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a cycle")
        return order

    # -- queries ---------------------------------------------------------

    def topological(self) -> list[Node]:
        return list(self._order)

    @property
    def input_names(self) -> list[str]:
        return [n.output for n in self.nodes if n.op == "Input"]

    @property
    def output_names(self) -> list[str]:
        return [n.output for n in self.nodes if n.op == "Output"]

    def consumption_order(self) -> list[str]:
        """Initializers in the order execution first needs them."""
        seen = []
        for node in self._order:
            for name in node.inputs:
                if name in self.initializers and name not in seen:
                    seen.append(name)
        seen += [n for n in self.initializers if n not in seen]
        return seen

    def consumers(self, value: str) -> list[Node]:
        return [n for n in self.nodes if value in n.inputs]

    # -- document --------------------------------------------------------

    def to_document(self) -> bytes:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "initializers": [{"name": k, "shape": list(v)} for k, v in self.initializers.items()],
            "nodes": [n.to_dict() for n in self.nodes],
        }
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_document(cls, data: bytes | str) -> ModelGraph:
        try:
            doc = json.loads(data)
            if doc.get("format") != FORMAT:
                raise GraphError("not a model graph document")
            if doc.get("version") != VERSION:
                raise GraphError(f"unsupported graph document version {doc.get('version')}")
            inits = {i["name"]: tuple(i["shape"]) for i in doc["initializers"]}
            nodes = [Node(n["id"], n["op"], tuple(n["inputs"]), n["output"], dict(n.get("attrs", {})))
                     for n in doc["nodes"]]
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise GraphError(f"malformed graph document: {exc}") from exc
        return cls(nodes, inits)


def mlp_graph(layer_sizes: Sequence[int], hidden: str = "Relu", final: str | None = None,
              input_name: str = "x", output_name: str = "y") -> ModelGraph:
    """Dense network: per layer ``act(h @ W{i} + b{i})``.

    Hidden layers use ``hidden``; the last layer uses ``final`` (None for no
    activation).
    """
    if len(layer_sizes) < 2:
        raise GraphError("an MLP needs at least an input and an output size")
    nodes = [Node(input_name, "Input", (), input_name, {"shape": [-1, int(layer_sizes[0])]})]
    inits: dict[str, tuple[int, ...]] = {}
    h = input_name
    last = len(layer_sizes) - 2
    for i, (a, b) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        w, bias = f"W{i}", f"b{i}"
        inits[w] = (int(a), int(b))
        inits[bias] = (int(b),)
        nodes.append(Node(f"matmul{i}", "MatMul", (h, w), f"mm{i}"))
        nodes.append(Node(f"bias{i}", "Add", (f"mm{i}", bias), f"pre{i}"))
        h = f"pre{i}"
        act = final if i == last else hidden
        if act:
            nodes.append(Node(f"act{i}", act, (h,), f"h{i}"))
            h = f"h{i}"
    nodes.append(Node(output_name, "Output", (h,), output_name))
    return ModelGraph(nodes, inits)
