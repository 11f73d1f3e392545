import pytest

from deltastore.errors import CorruptStore, DuplicateName, NotFound
from deltastore.graph import mlp_graph
from deltastore.storage import ArchitectureStore, Catalog, ModelEntry
from deltastore.types import INLINE, BaseRef


def entry(name, **kw):
    fields = dict(page=f"{name}.nspg", arch_key="0" * 64, tolerance=1e-6, tau=0.16,
                  original_bytes=100, stored_bytes=60, tensor_count=2)
    fields.update(kw)
    return ModelEntry(name, **fields)


def test_put_get_list(tmp_path):
    cat = Catalog(tmp_path / "catalog.json")
    a = cat.put(entry("a"))
    b = cat.put(entry("b"))
    assert (a.id, b.id) == (1, 2)
    assert cat.get("a") == a and cat.get(2) == b
    assert [m.name for m in cat.list()] == ["a", "b"]
    assert len(cat) == 2


def test_duplicate_and_missing(tmp_path):
    cat = Catalog(tmp_path / "catalog.json")
    cat.put(entry("a"))
    with pytest.raises(DuplicateName):
        cat.put(entry("a"))
    with pytest.raises(NotFound):
        cat.get("zzz")
    with pytest.raises(NotFound):
        cat.get(99)
    assert len(cat) == 1


def test_survives_restart_with_refs(tmp_path):
    path = tmp_path / "catalog.json"
    cat = Catalog(path)
    ref = BaseRef(12, 3)
    cat.put(entry("a"), [ref, ref, INLINE])
    cat.put(entry("b"), [ref])
    again = Catalog(path)
    assert again.list() == cat.list()
    assert again.ref_count(ref) == 3
    assert again.ref_count(INLINE) == 0
    assert again.ref_counts() == {ref: 3}
    assert again.put(entry("c")).id == 3


def test_corrupt_catalog(tmp_path):
    path = tmp_path / "catalog.json"
    path.write_text("{not json")
    with pytest.raises(CorruptStore):
        Catalog(path)
    path.write_text('{"format": "other", "version": 1}')
    with pytest.raises(CorruptStore):
        Catalog(path)


def test_architecture_round_trip_and_sharing(tmp_path):
    archs = ArchitectureStore(tmp_path / "arch")
    doc = mlp_graph([4, 8, 2]).to_document()
    k1 = archs.save(doc)
    k2 = archs.save(mlp_graph([4, 8, 2]).to_document())
    assert k1 == k2 == ArchitectureStore.key_for(doc)
    assert len(archs) == 1 and k1 in archs
    assert archs.load(k1) == doc
    assert archs.save(mlp_graph([4, 9, 2]).to_document()) != k1


def test_architecture_missing(tmp_path):
    archs = ArchitectureStore(tmp_path / "arch")
    with pytest.raises(NotFound):
        archs.load("f" * 64)
    with pytest.raises(NotFound):
        archs.load("../etc/passwd")
