import numpy as np
import pytest

from deltastore import (FULL, DuplicateName, InvalidArgument, ModelStore, SaveRequest, Tensor,
                        ToleranceTooTight, compress_model, load_model, mlp_graph, should_compress)
from deltastore.compressor import INLINE_BELOW
from deltastore.graph import ModelGraph, Node
from deltastore.loader import reconstruct_all

from .conftest import random_mlp, save

P = 2.0**-24


def max_error(store, name, tensors):
    rec = reconstruct_all(load_model(store, name, FULL))
    return max(float(np.abs(rec[t.name] - t.array().astype(np.float64)).max()) for t in tensors)


def test_should_compress_inclusive():
    assert should_compress(0.15, 0.16)
    assert should_compress(0.16, 0.16)
    assert not should_compress(0.161, 0.16)


def test_request_validation(rng):
    graph, tensors = random_mlp(rng, [4, 3])
    with pytest.raises(InvalidArgument):
        SaveRequest("m", graph, tensors[:1])
    with pytest.raises(InvalidArgument):
        SaveRequest("m", graph, tensors + tensors[:1])
    with pytest.raises(InvalidArgument):
        SaveRequest("m", graph, tensors, tolerance=0)
    with pytest.raises(InvalidArgument):
        SaveRequest("m", graph, tensors, tau=-1)
    wrong = [Tensor.from_array("W0", np.zeros((3, 4), np.float32)), tensors[1]]
    with pytest.raises(InvalidArgument):
        SaveRequest("m", graph, wrong)


def test_tensors_are_ordered_by_consumption(rng):
    graph, tensors = random_mlp(rng, [4, 6, 2])
    req = SaveRequest("m", graph, list(reversed(tensors)))
    assert [t.name for t in req.tensors] == ["W0", "b0", "W1", "b1"]


def test_first_save_creates_vertices_and_bounds_error(store, rng):
    graph, tensors = random_mlp(rng, [32, 64, 8])
    report = save(store, "m1", graph, tensors)
    big = [t for t in report.tensors if t.elem_count >= INLINE_BELOW]
    assert all(t.new_vertex for t in big)
    assert report.new_vertices == len(big) == store.pool.total_vertices()
    assert all(t.base.is_inline for t in report.tensors if t.elem_count < INLINE_BELOW)
    assert report.ratio == report.original_bytes / (report.stored_bytes + report.index_bytes)
    assert max_error(store, "m1", tensors) <= P


def test_second_identical_save_reuses_every_vertex(store, rng):
    graph, tensors = random_mlp(rng, [32, 64, 8])
    first = save(store, "a", graph, tensors)
    before = store.pool.total_vertices()
    second = save(store, "b", graph, tensors)
    assert store.pool.total_vertices() == before
    assert second.new_vertices == 0
    assert all(t.delta_range <= 2 / 255 * 1.0001 for t in second.tensors if not t.base.is_inline)
    assert second.ratio > first.ratio
    assert max_error(store, "b", tensors) <= P


def test_empty_model(store):
    graph = ModelGraph([Node("c", "Constant", (), "c", {"value": [1.0], "shape": [1]}),
                        Node("y", "Output", ("c",), "y")])
    report = save(store, "empty", graph, [])
    assert report.ratio == 1.0 and report.tensors == []
    assert len(store.page(store.model("empty"))) == 0


def test_fine_tune_family_is_delta_compressed(store):
    rng = np.random.default_rng(11)
    tau = 0.16
    graph, base = random_mlp(rng, [64, 128, 32])
    save(store, "base", graph, base)
    for k in range(4):
        tensors = [Tensor.from_array(t.name, (t.array() + rng.uniform(-tau / 8, tau / 8, t.shape))
                                     .astype(np.float32)) for t in base]
        report = save(store, f"ft{k}", graph, tensors, tau=tau)
        assert not any(t.new_vertex for t in report.tensors)
        assert max_error(store, f"ft{k}", tensors) <= P


def test_duplicate_name_rejected_before_work(store, rng):
    graph, tensors = random_mlp(rng, [8, 4])
    save(store, "m", graph, tensors)
    pages = len(list(store.pages_dir.iterdir()))
    with pytest.raises(DuplicateName):
        save(store, "m", graph, tensors)
    assert len(list(store.pages_dir.iterdir())) == pages


def test_tolerance_too_tight_leaves_no_model(store):
    graph = mlp_graph([4, 8])
    w = np.linspace(-1e6, 1e6, 32, dtype=np.float32).reshape(4, 8)
    tensors = [Tensor.from_array("W0", w), Tensor.from_array("b0", np.zeros(8, np.float32))]
    with pytest.raises(ToleranceTooTight):
        save(store, "huge", graph, tensors, tolerance=1e-9)
    assert len(store.catalog) == 0
    assert list(store.pages_dir.iterdir()) == []


def test_parallel_save_keeps_bound(tmp_path, rng):
    store = ModelStore(tmp_path / "s")
    graph, tensors = random_mlp(rng, [48, 96, 48, 8])
    report = compress_model(SaveRequest("p", graph, tensors), store, threads=4)
    assert len(report.tensors) == len(tensors)
    assert max_error(store, "p", tensors) <= P


def test_concurrent_saves_of_different_models(tmp_path):
    import threading
    store = ModelStore(tmp_path / "s")
    rng = np.random.default_rng(12)
    models = [random_mlp(rng, [24, 32, 4]) for _ in range(6)]
    errors = []

    def run(i):
        try:
            compress_model(SaveRequest(f"m{i}", *models[i]), store, threads=2)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=run, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors and len(store.catalog) == 6
    for i, (_, tensors) in enumerate(models):
        assert max_error(store, f"m{i}", tensors) <= P


def test_reopened_store_keeps_everything(tmp_path, rng):
    graph, tensors = random_mlp(rng, [16, 32, 4])
    save(ModelStore(tmp_path / "s"), "m", graph, tensors)
    again = ModelStore(tmp_path / "s")
    assert again.model("m").tensor_count == len(tensors)
    assert max_error(again, "m", tensors) <= P
    report = save(again, "m2", graph, tensors)
    assert report.new_vertices == 0
