"""Simulated object storage: a local directory behind a latency model.

Every request pays a fixed per-request latency plus transfer time at the
configured bandwidth, applied deterministically from config, so relative
costs of data movement are reproducible on any machine.  Counters record
exact request and byte traffic for cache-economy assertions.
"""

import os
import threading
import time
from dataclasses import dataclass


@dataclass(frozen=True)
class BlobConfig:
    latency_s: float = 0.05
    bandwidth_bytes_per_s: float = 200e6


@dataclass
class BlobCounters:
    get_requests: int = 0
    get_bytes: int = 0
    put_requests: int = 0
    put_bytes: int = 0

    def __post_init__(self):
        # bytes fetched per top-level key prefix, e.g. "tables" vs "_catalog"
        self.get_bytes_by_prefix = {}

    def _count_get(self, key: str, n: int):
        self.get_requests += 1
        self.get_bytes += n
        prefix = key.split("/", 1)[0]
        self.get_bytes_by_prefix[prefix] = \
            self.get_bytes_by_prefix.get(prefix, 0) + n

    def data_bytes_fetched(self) -> int:
        return self.get_bytes_by_prefix.get("tables", 0)

    def snapshot(self) -> dict:
        doc = {k: getattr(self, k) for k in
               ("get_requests", "get_bytes", "put_requests", "put_bytes")}
        doc["get_bytes_by_prefix"] = dict(self.get_bytes_by_prefix)
        return doc


class BlobStore:
    def __init__(self, root, config: BlobConfig = BlobConfig()):
        self.root = os.fspath(root)
        self.config = config
        self.counters = BlobCounters()
        self._lock = threading.Lock()
        os.makedirs(self.root, exist_ok=True)

    def _path(self, key: str) -> str:
        if key.startswith("/") or ".." in key.split("/"):
            raise ValueError(f"bad blob key {key!r}")
        return os.path.join(self.root, *key.split("/"))

    def _delay(self, nbytes: int):
        wait = self.config.latency_s
        if self.config.bandwidth_bytes_per_s > 0:
            wait += nbytes / self.config.bandwidth_bytes_per_s
        if wait > 0:
            time.sleep(wait)

    def put(self, key: str, data: bytes):
        path = self._path(key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        self._delay(len(data))
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
        with self._lock:
            self.counters.put_requests += 1
            self.counters.put_bytes += len(data)

    def exists(self, key: str) -> bool:
        return os.path.exists(self._path(key))

    def size(self, key: str) -> int:
        try:
            return os.path.getsize(self._path(key))
        except OSError:
            raise KeyError(key) from None

    def get(self, key: str) -> bytes:
        try:
            with open(self._path(key), "rb") as f:
                data = f.read()
        except OSError:
            raise KeyError(key) from None
        self._delay(len(data))
        with self._lock:
            self.counters._count_get(key, len(data))
        return data

    def get_range(self, key: str, offset: int, length: int) -> bytes:
        try:
            with open(self._path(key), "rb") as f:
                f.seek(offset)
                data = f.read(length)
        except OSError:
            raise KeyError(key) from None
        self._delay(len(data))
        with self._lock:
            self.counters._count_get(key, len(data))
        return data

    def list_keys(self, prefix: str = ""):
        out = []
        for dirpath, _, filenames in os.walk(self.root):
            for fn in filenames:
                full = os.path.join(dirpath, fn)
                key = os.path.relpath(full, self.root).replace(os.sep, "/")
                if key.startswith(prefix) and not key.endswith(".tmp"):
                    out.append(key)
        return sorted(out)


class BlobByteSource:
    """COLF byte-source adapter over one blob key; reads count in counters."""

    def __init__(self, blob: BlobStore, key: str):
        self.blob = blob
        self.key = key

    def size(self) -> int:
        return self.blob.size(self.key)

    def read_at(self, offset: int, length: int) -> bytes:
        return self.blob.get_range(self.key, offset, length)
