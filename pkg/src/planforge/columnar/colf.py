"""COLF: chunked column file with per-chunk statistics.

File layout:

    magic "CFL1" (4 bytes) · 4 zero bytes (keeps frames 8-aligned)
    one CBUF frame per chunk, back to back
    footer: canonical JSON {"chunks": [...directory...], "schema": {...}}
    u32 footer length · magic "CFL1"

The directory entry per chunk holds (offset, length, rows, stats); stats
are per-column {min, max, null_count}.  Reads fetch only the requested
columns' buffers and skip chunks whose statistics disprove the predicate;
rows inside surviving chunks are NOT filtered here (exact filtering is the
runtime's job).
"""

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..canon import canonical_json_bytes
from ..errors import MalformedFile, UnknownColumn
from .. import expr as expr_mod
from .cbuf import column_buffer_names, decode_column, encode_batch
from .schema import Schema
from .table import RecordBatch, Table, slice_batch

MAGIC = b"CFL1"
HEADER_PAD = b"\x00\x00\x00\x00"


# --- statistics ---

def _stat_value(dtype, v):
    if dtype == "int64":
        return int(v)
    if dtype == "float64":
        v = float(v)
        return None if math.isnan(v) else v
    if dtype == "bool":
        return bool(v)
    if dtype == "date32":
        return int(v)
    return v  # utf8: already str


def chunk_stats_of_batch(batch: RecordBatch) -> dict:
    """Per-column {min, max, null_count} over exactly the batch's rows."""
    stats = {}
    for f, col in zip(batch.schema.fields, batch.columns):
        valid = col.valid_mask()
        null_count = int(batch.rows - np.count_nonzero(valid))
        lo = hi = None
        if null_count < batch.rows:
            if f.dtype == "utf8":
                vals = [s for s in col.to_pylist() if s is not None]
                lo, hi = min(vals), max(vals)
            else:
                vals = col.values[valid]
                lo = _stat_value(f.dtype, vals.min())
                hi = _stat_value(f.dtype, vals.max())
                if lo is None or hi is None:  # NaN poisoned: unusable for pruning
                    lo = hi = None
        stats[f.name] = {"min": lo, "max": hi, "null_count": null_count}
    return stats


@dataclass
class ChunkStats:
    rows: int
    columns: dict  # name -> {"min","max","null_count"}

    def to_json(self):
        return {"rows": self.rows, "columns": self.columns}


def merge_stats(chunks) -> dict:
    """File-level summary across chunk stats (used by catalog snapshots)."""
    out = {}
    for entry in chunks:
        for name, s in entry.stats.items():
            cur = out.setdefault(name, {"min": None, "max": None, "null_count": 0})
            cur["null_count"] += s["null_count"]
            if s["min"] is not None:
                cur["min"] = s["min"] if cur["min"] is None else min(cur["min"], s["min"])
            if s["max"] is not None:
                cur["max"] = s["max"] if cur["max"] is None else max(cur["max"], s["max"])
    return out


# --- writing ---

def write_colf(table: Table, target_rows_per_chunk: int) -> bytes:
    if target_rows_per_chunk < 1:
        raise ValueError("target_rows_per_chunk must be >= 1")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(HEADER_PAD)
    directory = []
    if table.rows:
        combined = table.combined()
        for start in range(0, combined.rows, target_rows_per_chunk):
            chunk = slice_batch(combined, start,
                                min(start + target_rows_per_chunk, combined.rows))
            frame = encode_batch(chunk)
            directory.append({
                "offset": out.tell(),
                "length": len(frame),
                "rows": chunk.rows,
                "stats": chunk_stats_of_batch(chunk),
            })
            out.write(frame)
    footer = canonical_json_bytes({
        "chunks": directory,
        "schema": table.schema.to_json(),
    })
    out.write(footer)
    out.write(struct.pack("<I", len(footer)))
    out.write(MAGIC)
    return out.getvalue()


# --- byte sources ---

class BytesSource:
    def __init__(self, data: bytes):
        self._data = data

    def size(self) -> int:
        return len(self._data)

    def read_at(self, offset: int, length: int) -> bytes:
        return self._data[offset:offset + length]


class FileSource:
    def __init__(self, path):
        self._path = os.fspath(path)

    def size(self) -> int:
        return os.path.getsize(self._path)

    def read_at(self, offset: int, length: int) -> bytes:
        with open(self._path, "rb") as f:
            f.seek(offset)
            return f.read(length)


def _as_source(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return BytesSource(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        return FileSource(source)
    return source


# --- reading ---

@dataclass
class ChunkEntry:
    offset: int
    length: int
    rows: int
    stats: dict


@dataclass
class ReadReport:
    bytes_read: int = 0
    chunks_read: int = 0
    chunks_skipped: int = 0
    rows_read: int = 0


@dataclass
class ColfMeta:
    """Parsed footer plus per-chunk frame headers, fetched lazily.

    Immutable once built (files are content-addressed), so callers may
    cache instances to avoid re-fetching metadata.
    """
    schema: Schema
    chunks: list
    _headers: dict = field(default_factory=dict)

    # populated by ColfReader.ensure_header
    def chunk_buffers(self, ci: int, column: str) -> dict:
        descriptors, section_start = self._headers[ci]
        idx = self.schema.index(column)
        names = column_buffer_names(self.schema.fields[idx])
        return {name: (section_start + off, length)
                for name, (off, length) in zip(names, descriptors[idx])}


def read_footer(source) -> ColfMeta:
    source = _as_source(source)
    size = source.size()
    if size < 16:
        raise MalformedFile("file too small")
    trailer = source.read_at(size - 8, 8)
    if trailer[4:] != MAGIC:
        raise MalformedFile("bad trailing magic")
    (footer_len,) = struct.unpack("<I", trailer[:4])
    footer_start = size - 8 - footer_len
    if footer_start < 8:
        raise MalformedFile("footer overlaps header")
    head = source.read_at(0, 4)
    if head != MAGIC:
        raise MalformedFile("bad leading magic")
    try:
        footer = json.loads(source.read_at(footer_start, footer_len).decode("utf-8"))
        schema = Schema.from_json(footer["schema"])
        chunks = [ChunkEntry(c["offset"], c["length"], c["rows"], c["stats"])
                  for c in footer["chunks"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"unreadable footer: {exc}") from None
    return ColfMeta(schema=schema, chunks=chunks)


class ColfReader:
    """Column-selective chunk reader over a byte source."""

    def __init__(self, source, meta: ColfMeta = None):
        self.source = _as_source(source)
        self.meta = meta if meta is not None else read_footer(self.source)

    def ensure_header(self, ci: int):
        """Parse the chunk's CBUF header (metadata read, not counted as data)."""
        if ci in self.meta._headers:
            return
        entry = self.meta.chunks[ci]
        # frame header is small; fetch a prefix and retry if the JSON is longer
        prefix_len = min(entry.length, 512)
        raw = self.source.read_at(entry.offset, prefix_len)
        (header_len,) = struct.unpack_from("<I", raw, 4)
        need = 8 + header_len
        if need > len(raw):
            raw = self.source.read_at(entry.offset, need)
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
        section_start = entry.offset + ((8 + header_len + 7) & ~7)
        self.meta._headers[ci] = (header["columns"], section_start)

    def read_chunk_column(self, ci: int, column: str, report: ReadReport = None):
        """Fetch one column's raw buffers for a chunk; returns {name: bytes}."""
        self.ensure_header(ci)
        spans = self.meta.chunk_buffers(ci, column)
        out = {}
        for name, (offset, length) in spans.items():
            out[name] = self.source.read_at(offset, length)
            if report is not None:
                report.bytes_read += length
        return out

    def decode_chunk_column(self, ci: int, column: str, buffers: dict):
        entry = self.meta.chunks[ci]
        f = self.meta.schema.field(column)
        return decode_column(f, entry.rows, buffers)

    def chunk_survives(self, ci: int, predicate) -> bool:
        entry = self.meta.chunks[ci]
        if predicate is None:
            return True
        return expr_mod.chunk_may_match(predicate, entry.stats, entry.rows)

    def data_section_bytes(self, columns=None) -> int:
        """Total unpadded buffer bytes for the given columns across chunks."""
        names = columns if columns is not None else self.meta.schema.names
        total = 0
        for ci in range(len(self.meta.chunks)):
            self.ensure_header(ci)
            for name in names:
                total += sum(l for _, l in self.meta.chunk_buffers(ci, name).values())
        return total


def read_colf(source, columns=None, predicate=None):
    """Read requested columns, pruning chunks via stats.

    ``predicate`` may be an expression string or parsed AST.  Returns
    (Table, ReadReport); bytes_read counts only column buffer bytes.
    """
    reader = ColfReader(source)
    schema = reader.meta.schema
    if columns is None:
        columns = schema.names
    for name in columns:
        if name not in schema:
            raise UnknownColumn(f"column {name!r} not in file schema")
    if isinstance(predicate, str):
        predicate = expr_mod.parse_expr(predicate)
    if predicate is not None:
        predicate = expr_mod.type_check(predicate, schema)

    out_schema = schema.select(columns)
    report = ReadReport()
    batches = []
    for ci in range(len(reader.meta.chunks)):
        if not reader.chunk_survives(ci, predicate):
            report.chunks_skipped += 1
            continue
        cols = []
        for name in columns:
            buffers = reader.read_chunk_column(ci, name, report)
            cols.append(reader.decode_chunk_column(ci, name, buffers))
        batches.append(RecordBatch(out_schema, cols, rows=reader.meta.chunks[ci].rows))
        report.chunks_read += 1
        report.rows_read += reader.meta.chunks[ci].rows
    return Table(out_schema, batches), report
