import numpy as np
import pytest

from deltastore import ModelStore, SaveRequest, Tensor, compress_model, mlp_graph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def store(tmp_path):
    return ModelStore(tmp_path / "store")


def random_mlp(rng, sizes, scale=1.0):
    graph = mlp_graph(sizes)
    tensors = [
        Tensor.from_array(name, rng.uniform(-scale, scale, size=shape).astype(np.float32))
        for name, shape in graph.initializers.items()
    ]
    return graph, tensors


def save(store, name, graph, tensors, **kw):
    return compress_model(SaveRequest(name, graph, tensors, **kw), store)


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
