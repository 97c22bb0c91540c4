"""Environment assembly: caching, digests, ephemerality."""

import os
import time

import pytest

from planforge.envbuild import (
    EnvSpec,
    PackageCache,
    SimulatedRegistry,
    assemble,
    env_hash,
    teardown,
)
from planforge.errors import DigestMismatch, PackageNotFound


def _registry(tmp_path, latency=0.0, packages=("alpha", "beta")):
    reg = SimulatedRegistry(tmp_path / "registry", fetch_latency_s=latency)
    for name in packages:
        reg.publish(name, "1.0", {f"{name}/__init__.py": f"# {name}\n".encode()})
    return reg


def test_env_hash_order_insensitive():
    a = EnvSpec("3.11", {"pandas": "2.0", "numpy": "1.26"})
    b = EnvSpec("3.11", {"numpy": "1.26", "pandas": "2.0"})
    assert env_hash(a) == env_hash(b)


def test_env_hash_sensitive_to_pins():
    env_modern = EnvSpec("3.11", {"pandas": "2.0"})
    env_legacy = EnvSpec("3.10", {"pandas": "1.5.3"})
    assert env_hash(env_modern) != env_hash(env_legacy)
    assert env_hash(EnvSpec("3.11", {})) != env_hash(EnvSpec("3.11", {"pandas": "2.0"}))


def test_ensure_cached_idempotent_with_counters(tmp_path):
    reg = _registry(tmp_path, latency=0.05)
    cache = PackageCache(tmp_path / "cache")
    t0 = time.perf_counter()
    entry = cache.ensure_cached("alpha", "1.0", reg)
    cold = time.perf_counter() - t0
    assert reg.fetch_count == 1
    assert os.path.isdir(entry)
    assert cold >= 0.05
    t0 = time.perf_counter()
    cache.ensure_cached("alpha", "1.0", reg)
    warm = time.perf_counter() - t0
    assert reg.fetch_count == 1  # zero new fetches
    assert warm < 0.02


def test_unknown_package(tmp_path):
    reg = _registry(tmp_path)
    cache = PackageCache(tmp_path / "cache")
    with pytest.raises(PackageNotFound):
        cache.ensure_cached("ghost", "9.9", reg)


def test_tampered_archive_digest_mismatch(tmp_path):
    reg = _registry(tmp_path)
    tar_path = tmp_path / "registry" / "alpha" / "1.0" / "pkg.tar"
    tar_path.write_bytes(tar_path.read_bytes() + b"tamper")
    cache = PackageCache(tmp_path / "cache")
    with pytest.raises(DigestMismatch):
        cache.ensure_cached("alpha", "1.0", reg)
    assert not cache.is_cached("alpha", "1.0")


def test_assemble_links_and_scratch(tmp_path):
    reg = _registry(tmp_path)
    cache = PackageCache(tmp_path / "cache")
    spec = EnvSpec("3.11", {"alpha": "1.0", "beta": "1.0"})
    sbx = assemble(spec, cache, reg, tmp_path / "sandboxes")
    assert os.path.isdir(sbx.scratch_dir)
    assert sorted(sbx.links) == ["alpha", "beta"]
    for name, link in sbx.links.items():
        assert os.path.isdir(os.path.join(sbx.packages_dir, name))
        assert link["mode"] in ("symlink", "copy")
    teardown(sbx)
    assert not sbx.alive


def test_warm_assembly_touches_no_registry(tmp_path):
    reg = _registry(tmp_path, latency=0.05)
    cache = PackageCache(tmp_path / "cache")
    spec = EnvSpec("3.11", {"alpha": "1.0", "beta": "1.0"})
    first = assemble(spec, cache, reg, tmp_path / "sandboxes")
    fetches = reg.fetch_count
    second = assemble(spec, cache, reg, tmp_path / "sandboxes")
    assert reg.fetch_count == fetches
    assert second.duration_s < first.duration_s
    assert first.path != second.path
    assert first.links == second.links
    teardown(first), teardown(second)


def test_empty_env_sandbox_has_scratch_only(tmp_path):
    reg = _registry(tmp_path)
    cache = PackageCache(tmp_path / "cache")
    sbx = assemble(EnvSpec("3.11", {}), cache, reg, tmp_path / "sandboxes")
    assert os.listdir(sbx.packages_dir) == []
    assert os.path.isdir(sbx.scratch_dir)
    teardown(sbx)


def test_teardown_idempotent_and_cache_intact(tmp_path):
    reg = _registry(tmp_path)
    cache = PackageCache(tmp_path / "cache")
    spec = EnvSpec("3.11", {"alpha": "1.0"})
    sbx = assemble(spec, cache, reg, tmp_path / "sandboxes")
    digest_before = cache.entry_digest("alpha", "1.0")
    teardown(sbx)
    teardown(sbx)  # no-op
    assert cache.is_cached("alpha", "1.0")
    assert cache.entry_digest("alpha", "1.0") == digest_before


def test_scratch_is_ephemeral_across_invocations(tmp_path):
    reg = _registry(tmp_path)
    cache = PackageCache(tmp_path / "cache")
    spec = EnvSpec("3.11", {"alpha": "1.0"})
    sbx1 = assemble(spec, cache, reg, tmp_path / "sandboxes")
    with open(os.path.join(sbx1.scratch_dir, "state.txt"), "w") as f:
        f.write("leftover")
    teardown(sbx1)
    sbx2 = assemble(spec, cache, reg, tmp_path / "sandboxes")
    assert os.listdir(sbx2.scratch_dir) == []
    teardown(sbx2)
    assert os.listdir(tmp_path / "sandboxes") == []
