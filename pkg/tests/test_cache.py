"""Cache planes: differential column lookups, LRU accounting, result keys."""

import pytest

from planforge.cache import Cache, CacheStore, ResultKey
from planforge.errors import EntryTooLarge


@pytest.fixture
def cache():
    c = Cache(capacity_bytes=1000)
    yield c
    c.close()


def test_probe_empty_cache_all_miss(cache):
    hits, misses = cache.probe_columns("t", "c1", ["id", "usd", "country"])
    assert hits == set()
    assert misses == {"id", "usd", "country"}


def test_differential_superset_probe(cache):
    cache.insert_columns("t", "c1", {
        "id": ("blob-id", 10), "usd": ("blob-usd", 10), "country": ("blob-cc", 10),
    })
    hits, misses = cache.probe_columns("t", "c1", ["id", "usd", "country", "client_id"])
    assert hits == {"id", "usd", "country"}
    assert misses == {"client_id"}


def test_new_commit_never_hits(cache):
    cache.insert_columns("t", "c1", {"id": ("x", 10)})
    hits, misses = cache.probe_columns("t", "c2", ["id"])
    assert hits == set()
    assert misses == {"id"}


def test_lru_eviction_matches_hand_simulation():
    # oracle: hand-simulated LRU over capacity 25 with 10-unit entries
    store = CacheStore(25)
    assert store.insert("a", "A", 10) == []
    assert store.insert("b", "B", 10) == []
    evicted = store.insert("c", "C", 10)
    assert [k for k, _ in evicted] == ["a"]
    # touching b makes d evict c's elder: now b is newest, c oldest
    store.touch("b")
    evicted = store.insert("d", "D", 10)
    assert [k for k, _ in evicted] == ["c"]
    assert set(store.entries) == {"b", "d"}
    assert store.bytes == 20


def test_entry_too_large(cache):
    with pytest.raises(EntryTooLarge):
        cache.insert_columns("t", "c1", {"huge": ("x", 10_000)})


def test_probe_refreshes_lru_position():
    c = Cache(capacity_bytes=25)
    try:
        c.insert_columns("t", "c1", {"a": ("A", 10)})
        c.insert_columns("t", "c1", {"b": ("B", 10)})
        c.probe_columns("t", "c1", ["a"])  # refresh a; b becomes oldest
        c.insert_columns("t", "c1", {"c": ("C", 10)})
        hits, misses = c.probe_columns("t", "c1", ["a", "b", "c"])
        assert hits == {"a", "c"}
        assert misses == {"b"}
    finally:
        c.close()


def test_reinsert_accounts_once_and_refreshes(cache):
    cache.insert_columns("t", "c1", {"id": ("v1", 400)})
    cache.insert_columns("t", "c1", {"id": ("v2", 400)})
    stats = cache.stats()
    assert stats["bytes"] == 400
    assert cache.get_column("t", "c1", "id") == "v2"


def test_result_key_sensitive_to_every_part():
    base = ResultKey("model-d", ("c1", "c2"), "env-h", "expr-d")
    assert base.digest() == ResultKey("model-d", ("c2", "c1"), "env-h", "expr-d").digest()
    variants = [
        ResultKey("model-X", ("c1", "c2"), "env-h", "expr-d"),
        ResultKey("model-d", ("c1", "cX"), "env-h", "expr-d"),
        ResultKey("model-d", ("c1", "c2"), "env-X", "expr-d"),
        ResultKey("model-d", ("c1", "c2"), "env-h", "expr-X"),
    ]
    digests = {v.digest() for v in variants}
    assert base.digest() not in digests
    assert len(digests) == 4


def test_result_cache_round_trip(tmp_path, cache):
    spill = tmp_path / "r.colf"
    spill.write_bytes(b"fake")
    key = ResultKey("m", ("c1",), "e", "x")
    assert cache.probe_result(key) is None
    cache.insert_result(key, {"path": str(spill)}, 4)
    assert cache.probe_result(key)["path"] == str(spill)
    spill.unlink()  # vanished spill degrades to a miss
    assert cache.probe_result(key) is None


def test_result_entries_survive_restart(tmp_path):
    spill = tmp_path / "r.colf"
    spill.write_bytes(b"x" * 64)
    key = ResultKey("m", ("c1",), "e", "x")
    c1 = Cache(capacity_bytes=1000, state_dir=tmp_path)
    c1.insert_result(key, {"path": str(spill)}, 64)
    c1.close()
    c2 = Cache(capacity_bytes=1000, state_dir=tmp_path)
    try:
        assert c2.probe_result(key)["path"] == str(spill)
    finally:
        c2.close()


def test_stats_shape(cache):
    cache.insert_columns("t", "c1", {"id": ("x", 10)})
    cache.probe_columns("t", "c1", ["id", "usd"])
    stats = cache.stats()
    for key in ("entries", "bytes", "hits", "misses", "evictions",
                "differential_bytes_saved"):
        assert key in stats
    assert stats["hits"] == 1
    assert stats["misses"] == 1
