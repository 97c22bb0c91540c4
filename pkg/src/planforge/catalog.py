"""Minimal lake catalog: immutable, content-addressed table commits.

Tables are versioned as commit chains; every commit points at an ordered
list of COLF files in the blob store.  Data files are digest-named and
never rewritten, so reading at an old commit is byte-identical forever and
the cache can treat (table, commit, column) keys as structurally fresh or
stale with certainty.

Catalog metadata lives under a ``_catalog/`` prefix: one head-pointer
document per table plus one document per commit, all canonical JSON.
Commit ids hash (parent, op, schema, file list) — timestamps stay out of
the hash so replays are deterministic.
"""

import json
import threading
import time
from dataclasses import dataclass

from .blob import BlobStore
from .canon import canonical_json_bytes, digest_of, sha256_hex
from .columnar import Table, write_colf
from .columnar.colf import merge_stats, read_footer
from .errors import SchemaMismatch, TableExists, UnknownCommit, UnknownTable

DEFAULT_CHUNK_ROWS = 65536


@dataclass(frozen=True)
class CommitFile:
    path: str
    rows: int
    stats: dict  # per-column summary {min, max, null_count}

    def to_json(self):
        return {"path": self.path, "rows": self.rows, "stats": self.stats}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["path"], doc["rows"], doc["stats"])


@dataclass(frozen=True)
class Commit:
    commit_id: str
    parent_id: str  # "" for the root commit
    op: str  # create | append | overwrite
    table: str
    schema: dict
    files: tuple
    created_at: float

    @staticmethod
    def compute_id(parent_id: str, op: str, schema: dict, files) -> str:
        return digest_of({
            "parent_id": parent_id,
            "op": op,
            "schema": schema,
            "files": [f.to_json() for f in files],
        })

    def to_json(self):
        return {
            "commit_id": self.commit_id,
            "parent_id": self.parent_id,
            "op": self.op,
            "table": self.table,
            "schema": self.schema,
            "files": [f.to_json() for f in self.files],
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(doc["commit_id"], doc["parent_id"], doc["op"], doc["table"],
                   doc["schema"], tuple(CommitFile.from_json(f) for f in doc["files"]),
                   doc["created_at"])


@dataclass(frozen=True)
class Snapshot:
    table: str
    commit_id: str
    schema: dict
    files: tuple  # ordered CommitFile list

    @property
    def rows(self) -> int:
        return sum(f.rows for f in self.files)


@dataclass(frozen=True)
class TableRef:
    table: str
    columns: tuple = None  # optional projection
    filter: str = None  # optional predicate source text

    def __post_init__(self):
        if self.columns is not None:
            cols = tuple(self.columns)
            if not cols or len(set(cols)) != len(cols):
                raise ValueError("projection must be non-empty and unique")
            object.__setattr__(self, "columns", cols)


def _head_key(name: str) -> str:
    return f"_catalog/tables/{name}/head.json"


def _commit_key(commit_id: str) -> str:
    return f"_catalog/commits/{commit_id}.json"


class Catalog:
    """Single-writer-per-table catalog over a blob store.

    Commit documents are immutable and cached in memory after first read;
    head pointers are cached coherently for writes made through this
    instance (the advisory single-writer lock makes that sound).
    """

    def __init__(self, blob: BlobStore, chunk_rows: int = DEFAULT_CHUNK_ROWS,
                 clock=time.time):
        self.blob = blob
        self.chunk_rows = chunk_rows
        self.clock = clock
        self._write_locks = {}
        self._locks_guard = threading.Lock()
        self._commit_cache = {}

    def _table_lock(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._write_locks.setdefault(name, threading.Lock())

    # --- metadata I/O ---
    # head pointers are mutable and other catalog instances may advance
    # them, so they are re-read every time; commit documents are immutable
    # and cached freely

    def _read_head(self, name: str) -> str:
        try:
            doc = json.loads(self.blob.get(_head_key(name)).decode("utf-8"))
        except KeyError:
            raise UnknownTable(f"no table named {name!r}") from None
        return doc["commit_id"]

    def _write_head(self, name: str, commit_id: str):
        self.blob.put(_head_key(name), canonical_json_bytes({"commit_id": commit_id}))

    def head(self, name: str) -> str:
        return self._read_head(name)

    def _read_commit(self, commit_id: str) -> Commit:
        if commit_id in self._commit_cache:
            return self._commit_cache[commit_id]
        try:
            doc = json.loads(self.blob.get(_commit_key(commit_id)).decode("utf-8"))
        except KeyError:
            raise UnknownCommit(f"no commit {commit_id!r}") from None
        commit = Commit.from_json(doc)
        self._commit_cache[commit_id] = commit
        return commit

    def _write_commit(self, commit: Commit):
        self.blob.put(_commit_key(commit.commit_id),
                      canonical_json_bytes(commit.to_json()))
        self._commit_cache[commit.commit_id] = commit

    # --- data files ---

    def _write_table_files(self, name: str, table: Table):
        """Write COLF file(s) for the rows; digest-named under the table prefix."""
        if table.rows == 0:
            return []
        colf_bytes = write_colf(table, self.chunk_rows)
        digest = sha256_hex(colf_bytes)[:32]
        path = f"tables/{name}/{digest}.colf"
        if not self.blob.exists(path):
            self.blob.put(path, colf_bytes)
        meta = read_footer(colf_bytes)
        return [CommitFile(path=path, rows=table.rows,
                           stats=merge_stats(meta.chunks))]

    # --- operations ---

    def table_exists(self, name: str) -> bool:
        try:
            self._read_head(name)
            return True
        except UnknownTable:
            return False

    def list_tables(self):
        names = set()
        for key in self.blob.list_keys("_catalog/tables/"):
            names.add(key.split("/")[2])
        return sorted(names)

    def create_table(self, name: str, schema, table: Table) -> Commit:
        schema_doc = schema.to_json() if hasattr(schema, "to_json") else schema
        with self._table_lock(name):
            if self.table_exists(name):
                raise TableExists(f"table {name!r} already exists")
            files = self._write_table_files(name, table)
            commit_id = Commit.compute_id("", "create", schema_doc, files)
            commit = Commit(commit_id, "", "create", name, schema_doc,
                            tuple(files), self.clock())
            self._write_commit(commit)
            self._write_head(name, commit_id)
            return commit

    def append(self, name: str, table: Table) -> Commit:
        with self._table_lock(name):
            head = self._read_head(name)
            prev = self._read_commit(head)
            schema_doc = table.schema.to_json()
            if schema_doc != prev.schema:
                raise SchemaMismatch(
                    f"append schema does not match table {name!r}")
            new_files = self._write_table_files(name, table)
            files = tuple(prev.files) + tuple(new_files)
            commit_id = Commit.compute_id(head, "append", prev.schema, files)
            commit = Commit(commit_id, head, "append", name, prev.schema,
                            files, self.clock())
            self._write_commit(commit)
            self._write_head(name, commit_id)
            return commit

    def overwrite(self, name: str, table: Table) -> Commit:
        """Replace the table's contents; creates the table if absent."""
        with self._table_lock(name):
            if not self.table_exists(name):
                files = self._write_table_files(name, table)
                schema_doc = table.schema.to_json()
                commit_id = Commit.compute_id("", "create", schema_doc, files)
                commit = Commit(commit_id, "", "create", name, schema_doc,
                                tuple(files), self.clock())
            else:
                head = self._read_head(name)
                prev = self._read_commit(head)
                schema_doc = table.schema.to_json()
                files = tuple(self._write_table_files(name, table))
                commit_id = Commit.compute_id(head, "overwrite", schema_doc, files)
                commit = Commit(commit_id, head, "overwrite", name, schema_doc,
                                files, self.clock())
            self._write_commit(commit)
            self._write_head(name, commit.commit_id)
            return commit

    def resolve(self, name: str, at: str = None) -> Snapshot:
        head = self._read_head(name)
        if at is None:
            commit = self._read_commit(head)
        else:
            # walk the chain from head to prove membership in this history
            cur = head
            commit = None
            while cur:
                c = self._read_commit(cur)
                if c.commit_id == at:
                    commit = c
                    break
                cur = c.parent_id
            if commit is None:
                raise UnknownCommit(
                    f"commit {at!r} not in history of table {name!r}")
        return Snapshot(table=name, commit_id=commit.commit_id,
                        schema=commit.schema, files=commit.files)

    def history(self, name: str):
        out = []
        cur = self._read_head(name)
        while cur:
            c = self._read_commit(cur)
            out.append(c)
            cur = c.parent_id
        return out
