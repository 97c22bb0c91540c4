"""Worker-local data-aware cache.

Two planes share one byte budget discipline:

  * a columnar differential plane keyed by (table, commit_id, column) —
    staleness is structural: a new commit id can never hit;
  * an intermediate-result plane keyed by (model digest, sorted input
    versions, env hash, expr digest) whose values are handles to COLF
    spill files on worker disk, so hits survive process restarts within a
    worker session.

A single owner thread serializes all operations; callers talk to it via a
request/response queue and never share mutable state with it.
"""

import json
import os
import queue
import threading
from collections import OrderedDict
from dataclasses import dataclass

from .canon import canonical_json_bytes, digest_of
from .errors import EntryTooLarge


@dataclass(frozen=True)
class ResultKey:
    model_digest: str
    inputs: tuple  # sorted commit ids / upstream result digests
    env_hash: str
    expr_digest: str

    def digest(self) -> str:
        return digest_of({
            "model": self.model_digest,
            "inputs": sorted(self.inputs),
            "env": self.env_hash,
            "expr": self.expr_digest,
        })


class CacheStore:
    """Byte-capacity LRU; eviction strictly by last-used tick."""

    def __init__(self, capacity_bytes: int):
        self.capacity_bytes = capacity_bytes
        self.entries = OrderedDict()  # key -> (value, size)
        self.bytes = 0

    def get(self, key):
        if key not in self.entries:
            return None
        self.entries.move_to_end(key)
        return self.entries[key][0]

    def contains(self, key) -> bool:
        return key in self.entries

    def touch(self, key):
        if key in self.entries:
            self.entries.move_to_end(key)

    def insert(self, key, value, size: int):
        """Returns the list of evicted (key, value) pairs."""
        if size > self.capacity_bytes:
            raise EntryTooLarge(
                f"entry of {size} bytes exceeds capacity {self.capacity_bytes}")
        if key in self.entries:
            _, old_size = self.entries.pop(key)
            self.bytes -= old_size
        evicted = []
        while self.bytes + size > self.capacity_bytes and self.entries:
            old_key, (old_value, old_sz) = self.entries.popitem(last=False)
            self.bytes -= old_sz
            evicted.append((old_key, old_value))
        self.entries[key] = (value, size)
        self.bytes += size
        return evicted

    def remove(self, key):
        if key in self.entries:
            _, size = self.entries.pop(key)
            self.bytes -= size


class Cache:
    """The worker cache agent.  All public methods are messages."""

    def __init__(self, capacity_bytes: int, state_dir=None):
        self._requests = queue.Queue()
        self.columns = CacheStore(capacity_bytes)
        self.results = CacheStore(capacity_bytes)
        self.state_dir = os.fspath(state_dir) if state_dir else None
        self.counters = {
            "hits": 0, "misses": 0, "evictions": 0,
            "differential_bytes_saved": 0,
        }
        self._worker = threading.Thread(target=self._serve, daemon=True,
                                        name="cache-agent")
        self._worker.start()
        if self.state_dir:
            self._call("load_index")

    # --- message plumbing ---

    def _serve(self):
        while True:
            item = self._requests.get()
            if item is None:
                return
            fn_name, args, kwargs, reply = item
            try:
                reply.put(("ok", getattr(self, "_" + fn_name)(*args, **kwargs)))
            except Exception as exc:  # propagated to the caller
                reply.put(("err", exc))

    def _call(self, fn_name, *args, **kwargs):
        reply = queue.Queue()
        self._requests.put((fn_name, args, kwargs, reply))
        status, value = reply.get()
        if status == "err":
            raise value
        return value

    def close(self):
        self._requests.put(None)
        self._worker.join(timeout=5)

    # --- public surface ---

    def probe_columns(self, table, commit_id, columns):
        return self._call("probe_columns", table, commit_id, tuple(columns))

    def get_column(self, table, commit_id, column):
        return self._call("get_column", table, commit_id, column)

    def insert_columns(self, table, commit_id, column_entries):
        return self._call("insert_columns", table, commit_id, column_entries)

    def note_saved_bytes(self, n):
        return self._call("note_saved_bytes", n)

    def probe_result(self, key: ResultKey):
        return self._call("probe_result", key)

    def insert_result(self, key: ResultKey, handle: dict, size: int):
        return self._call("insert_result", key, handle, size)

    def stats(self) -> dict:
        return self._call("stats")

    def clear(self):
        return self._call("clear")

    # --- owner-thread implementations ---

    def _probe_columns(self, table, commit_id, columns):
        if not columns:
            raise ValueError("columns must be non-empty")
        hits, misses = set(), set()
        for col in columns:
            key = (table, commit_id, col)
            if self.columns.contains(key):
                self.columns.touch(key)
                hits.add(col)
                self.counters["hits"] += 1
            else:
                misses.add(col)
                self.counters["misses"] += 1
        return hits, misses

    def _get_column(self, table, commit_id, column):
        return self.columns.get((table, commit_id, column))

    def _insert_columns(self, table, commit_id, column_entries):
        evicted_keys = []
        for col, (value, size) in column_entries.items():
            evicted = self.columns.insert((table, commit_id, col), value, size)
            evicted_keys.extend(k for k, _ in evicted)
            self.counters["evictions"] += len(evicted)
        return evicted_keys

    def _note_saved_bytes(self, n):
        self.counters["differential_bytes_saved"] += int(n)

    def _probe_result(self, key):
        handle = self.results.get(key.digest())
        if handle is None:
            self.counters["misses"] += 1
            return None
        if handle.get("path") and not os.path.exists(handle["path"]):
            # spill vanished underneath us; treat as a miss
            self.results.remove(key.digest())
            self.counters["misses"] += 1
            return None
        self.counters["hits"] += 1
        return handle

    def _insert_result(self, key, handle, size):
        evicted = self.results.insert(key.digest(), handle, size)
        for _, old_handle in evicted:
            self.counters["evictions"] += 1
            path = old_handle.get("path")
            if path and os.path.exists(path):
                os.unlink(path)
        self._persist_index()
        return [k for k, _ in evicted]

    def _stats(self):
        return {
            "entries": len(self.columns.entries) + len(self.results.entries),
            "bytes": self.columns.bytes + self.results.bytes,
            **self.counters,
        }

    def _clear(self):
        for _, (handle, _) in self.results.entries.items():
            path = handle.get("path")
            if path and os.path.exists(path):
                os.unlink(path)
        self.columns = CacheStore(self.columns.capacity_bytes)
        self.results = CacheStore(self.results.capacity_bytes)
        for k in self.counters:
            self.counters[k] = 0
        self._persist_index()

    # --- persistence (result plane only; column bytes are volatile) ---

    def _index_path(self):
        return os.path.join(self.state_dir, "cache_index.json")

    def _persist_index(self):
        if not self.state_dir:
            return
        os.makedirs(self.state_dir, exist_ok=True)
        doc = {
            "counters": self.counters,
            "results": [
                {"key": key, "handle": handle, "size": size}
                for key, (handle, size) in self.results.entries.items()
            ],
        }
        with open(self._index_path(), "wb") as f:
            f.write(canonical_json_bytes(doc))

    def _load_index(self):
        path = self._index_path() if self.state_dir else None
        if not path or not os.path.exists(path):
            return
        try:
            doc = json.loads(open(path, "rb").read().decode("utf-8"))
        except ValueError:
            return
        self.counters.update(doc.get("counters", {}))
        for entry in doc.get("results", []):
            handle = entry["handle"]
            if handle.get("path") and os.path.exists(handle["path"]):
                self.results.insert(entry["key"], handle, entry["size"])
