"""Ephemeral per-invocation environments from a local package cache.

Environments are declared as exact pins; packages are the atomic building
blocks (no image layers).  A simulated registry (directory of tar archives
plus digests, behind a per-fetch latency) stands in for a real package
index so tests stay hermetic.  Sandboxes are assembled by linking cached
package directories, which costs milliseconds once the cache is warm, and
are removed entirely at teardown: nothing survives an invocation except
the cache itself.
"""

import os
import shutil
import tarfile
import tempfile
import threading
import time
from dataclasses import dataclass, field

from .canon import digest_of, sha256_hex
from .errors import DigestMismatch, PackageNotFound


@dataclass(frozen=True)
class EnvSpec:
    interpreter: str
    packages: tuple  # sorted (name, version) pairs

    def __init__(self, interpreter: str, packages=()):
        object.__setattr__(self, "interpreter", interpreter)
        if isinstance(packages, dict):
            packages = packages.items()
        object.__setattr__(self, "packages", tuple(sorted(packages)))

    def to_json(self) -> dict:
        return {"interpreter": self.interpreter,
                "packages": {n: v for n, v in self.packages}}

    @classmethod
    def from_json(cls, doc: dict) -> "EnvSpec":
        return cls(doc["interpreter"], doc.get("packages", {}))


def env_hash(spec: EnvSpec) -> str:
    """Order-insensitive digest of the canonicalized pin set."""
    return digest_of(spec.to_json())


class SimulatedRegistry:
    """Local directory of package archives with an injected fetch latency.

    Layout: <root>/<name>/<version>/pkg.tar plus digest.txt.
    """

    def __init__(self, root, fetch_latency_s: float = 0.0):
        self.root = os.fspath(root)
        self.fetch_latency_s = fetch_latency_s
        self.fetch_count = 0
        self._lock = threading.Lock()
        os.makedirs(self.root, exist_ok=True)

    def _pkg_dir(self, name: str, version: str) -> str:
        return os.path.join(self.root, name, version)

    def publish(self, name: str, version: str, files: dict):
        """Test helper: build an archive holding {relpath: bytes}."""
        pkg_dir = self._pkg_dir(name, version)
        os.makedirs(pkg_dir, exist_ok=True)
        tar_path = os.path.join(pkg_dir, "pkg.tar")
        with tarfile.open(tar_path, "w") as tar:
            for relpath, data in sorted(files.items()):
                info = tarfile.TarInfo(relpath)
                info.size = len(data)
                info.mtime = 0
                import io
                tar.addfile(info, io.BytesIO(data))
        digest = sha256_hex(open(tar_path, "rb").read())
        with open(os.path.join(pkg_dir, "digest.txt"), "w") as f:
            f.write(digest + "\n")

    def fetch(self, name: str, version: str):
        """Returns (tar bytes, declared digest); pays the injected latency."""
        pkg_dir = self._pkg_dir(name, version)
        tar_path = os.path.join(pkg_dir, "pkg.tar")
        digest_path = os.path.join(pkg_dir, "digest.txt")
        if not (os.path.exists(tar_path) and os.path.exists(digest_path)):
            raise PackageNotFound(f"{name}=={version} not in registry")
        if self.fetch_latency_s > 0:
            time.sleep(self.fetch_latency_s)
        with self._lock:
            self.fetch_count += 1
        data = open(tar_path, "rb").read()
        declared = open(digest_path).read().strip()
        return data, declared


class PackageCache:
    """Immutable, digest-verified unpacked package entries."""

    def __init__(self, root):
        self.root = os.fspath(root)
        os.makedirs(self.root, exist_ok=True)
        self._entry_locks = {}
        self._guard = threading.Lock()

    def _entry_dir(self, name: str, version: str) -> str:
        return os.path.join(self.root, f"{name}-{version}")

    def _entry_lock(self, name: str, version: str) -> threading.Lock:
        with self._guard:
            return self._entry_locks.setdefault((name, version), threading.Lock())

    def is_cached(self, name: str, version: str) -> bool:
        return os.path.exists(os.path.join(self._entry_dir(name, version), ".digest"))

    def entry_digest(self, name: str, version: str) -> str:
        return open(os.path.join(self._entry_dir(name, version), ".digest")).read().strip()

    def ensure_cached(self, name: str, version: str, registry: SimulatedRegistry) -> str:
        """Fetch+verify+unpack once; later calls touch nothing remote."""
        entry = self._entry_dir(name, version)
        if self.is_cached(name, version):
            return entry
        with self._entry_lock(name, version):
            if self.is_cached(name, version):
                return entry
            data, declared = registry.fetch(name, version)
            actual = sha256_hex(data)
            if actual != declared:
                raise DigestMismatch(
                    f"{name}=={version}: archive digest {actual[:12]}… "
                    f"does not match declared {declared[:12]}…")
            tmp = tempfile.mkdtemp(prefix=".unpack-", dir=self.root)
            try:
                import io
                with tarfile.open(fileobj=io.BytesIO(data)) as tar:
                    tar.extractall(tmp)
                with open(os.path.join(tmp, ".digest"), "w") as f:
                    f.write(declared + "\n")
                os.rename(tmp, entry)
            except OSError:
                shutil.rmtree(tmp, ignore_errors=True)
                if not self.is_cached(name, version):
                    raise
            return entry


@dataclass
class Sandbox:
    path: str
    env_hash: str
    assembled_at: float
    duration_s: float
    links: dict = field(default_factory=dict)  # package -> {target, mode}

    @property
    def scratch_dir(self) -> str:
        return os.path.join(self.path, "scratch")

    @property
    def packages_dir(self) -> str:
        return os.path.join(self.path, "pkgs")

    @property
    def alive(self) -> bool:
        return os.path.isdir(self.path)


def assemble(spec: EnvSpec, cache: PackageCache, registry: SimulatedRegistry,
             sandbox_root) -> Sandbox:
    """Materialize a fresh sandbox for one invocation.

    Warm-cache assembly touches no registry: it only creates links into
    the package cache plus a scratch directory.
    """
    t0 = time.perf_counter()
    os.makedirs(sandbox_root, exist_ok=True)
    path = tempfile.mkdtemp(prefix="sbx-", dir=sandbox_root)
    os.makedirs(os.path.join(path, "pkgs"))
    os.makedirs(os.path.join(path, "scratch"))
    links = {}
    for name, version in spec.packages:
        entry = cache.ensure_cached(name, version, registry)
        link_path = os.path.join(path, "pkgs", name)
        try:
            os.symlink(entry, link_path)
            links[name] = {"target": entry, "mode": "symlink"}
        except OSError:
            shutil.copytree(entry, link_path)
            links[name] = {"target": entry, "mode": "copy"}
    duration = time.perf_counter() - t0
    return Sandbox(path=path, env_hash=env_hash(spec),
                   assembled_at=time.time(), duration_s=duration, links=links)


def teardown(sandbox: Sandbox):
    """Remove the sandbox directory; idempotent, never touches the cache."""
    shutil.rmtree(sandbox.path, ignore_errors=True)
