"""Refcounted byte regions with once-per-region memory accounting.

A region owns one immutable byte extent; any number of zero-copy views
(decoded batches) may reference it.  ``resident_bytes`` is counted once per
region in its registry no matter how many views are live.
"""

import itertools
import threading

_region_ids = itertools.count(1)


class BufferRegion:
    __slots__ = ("region_id", "buf", "resident_bytes", "_refcount", "_lock",
                 "_registry", "_closed")

    def __init__(self, buf, registry=None, region_id=None):
        self.buf = memoryview(buf)
        self.region_id = region_id or f"region-{next(_region_ids)}"
        self.resident_bytes = len(self.buf)
        self._refcount = 1
        self._lock = threading.Lock()
        self._registry = registry
        self._closed = False
        if registry is not None:
            registry._register(self)

    @property
    def refcount(self) -> int:
        with self._lock:
            return self._refcount

    def retain(self) -> "BufferRegion":
        with self._lock:
            if self._closed:
                raise ValueError(f"{self.region_id} already released")
            self._refcount += 1
        return self

    def release(self):
        with self._lock:
            self._refcount -= 1
            if self._refcount > 0:
                return
            self._closed = True
        if self._registry is not None:
            self._registry._unregister(self)

    @property
    def closed(self) -> bool:
        return self._closed


class RegionRegistry:
    """Accounting authority: sum of resident bytes over live regions."""

    def __init__(self):
        self._lock = threading.Lock()
        self._regions = {}

    def _register(self, region: BufferRegion):
        with self._lock:
            self._regions[region.region_id] = region

    def _unregister(self, region: BufferRegion):
        with self._lock:
            self._regions.pop(region.region_id, None)

    def total_resident_bytes(self) -> int:
        with self._lock:
            return sum(r.resident_bytes for r in self._regions.values())

    def live_regions(self) -> int:
        with self._lock:
            return len(self._regions)

    def release_all(self):
        with self._lock:
            regions = list(self._regions.values())
        for r in regions:
            while not r.closed:
                r.release()
