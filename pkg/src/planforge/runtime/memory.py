"""Accounting-based memory limits.

High-water accounting is monotone within an invocation: bytes a node
materializes (its published output, plus any non-zero-copy input it had to
materialize) are charged once and never released mid-run.  Shared regions
are attributed to their producer only — consumers of a zero-copy view are
never charged.  Enforcement is bookkeeping, not an OS limit: an honest
desk-scale stand-in for per-invocation container limits.
"""

import threading

from ..errors import MemoryLimitExceeded


class MemoryAccount:
    def __init__(self, node: str, limit_bytes: int = None):
        self.node = node
        self.limit_bytes = limit_bytes
        self.high_water = 0
        self._lock = threading.Lock()

    def charge(self, requested: int):
        """Admit and record, or raise MemoryLimitExceeded."""
        with self._lock:
            if (self.limit_bytes is not None
                    and self.high_water + requested > self.limit_bytes):
                raise MemoryLimitExceeded(self.node, requested,
                                          self.high_water, self.limit_bytes)
            self.high_water += requested


def enforce_memory(account: MemoryAccount, requested: int):
    account.charge(requested)
