"""CBUF: the bit-exact columnar interchange frame.

Frame layout (little-endian throughout):

    magic "CBF1" (4 bytes)
    u32 header length
    header: canonical JSON {"columns": [[ [offset,length], ... ]],
                            "rows": N, "schema": {...}}
    zero padding to an 8-byte boundary (relative to frame start)
    buffer section: buffers back to back, each starting 8-aligned,
                    zero padding between; offsets are section-relative
    u64 total frame length (length check, repeated)

Per-column buffer order: validity bitmap (nullable fields only, LSB-first,
1 = valid), then values for fixed-width dtypes, or offsets + data for utf8.
Decoding yields numpy views over the region: values, offsets and data
buffers are never copied.
"""

import json
import struct

import numpy as np

from ..canon import canonical_json_bytes
from ..errors import ChecksumMismatch, MalformedFrame
from .region import BufferRegion
from .schema import NUMPY_DTYPE, Field, Schema
from .table import ColumnVector, RecordBatch, Table

MAGIC = b"CBF1"


def _align8(n: int) -> int:
    return (n + 7) & ~7


def _pack_validity(validity: np.ndarray) -> bytes:
    return np.packbits(validity, bitorder="little").tobytes()


def _unpack_validity(raw, length: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[:length].astype(np.bool_)


def column_buffer_names(field: Field):
    names = ["validity"] if field.nullable else []
    if field.dtype == "utf8":
        return names + ["offsets", "data"]
    return names + ["values"]


def encode_column_buffers(field: Field, col: ColumnVector) -> dict:
    out = {}
    if field.nullable:
        out["validity"] = _pack_validity(col.validity)
    if field.dtype == "utf8":
        out["offsets"] = col.offsets.astype("<i4", copy=False).tobytes()
        out["data"] = col.data.tobytes()
    else:
        out["values"] = col.values.astype(NUMPY_DTYPE[field.dtype], copy=False).tobytes()
    return out


def decode_column(field: Field, rows: int, buffers: dict) -> ColumnVector:
    """Build a column over raw buffers (memoryview/bytes); values stay views."""
    validity = None
    if field.nullable:
        validity = _unpack_validity(buffers["validity"], rows)
    if field.dtype == "utf8":
        offsets = np.frombuffer(buffers["offsets"], dtype="<i4", count=rows + 1)
        data = np.frombuffer(buffers["data"], dtype=np.uint8)
        return ColumnVector.view_over("utf8", rows, validity,
                                      offsets=offsets, data=data)
    values = np.frombuffer(buffers["values"], dtype=NUMPY_DTYPE[field.dtype], count=rows)
    return ColumnVector.view_over(field.dtype, rows, validity, values=values)


def encode_batch(batch: RecordBatch) -> bytes:
    """Encode a batch as one CBUF frame; equal batches yield identical bytes."""
    raw_cols = [encode_column_buffers(f, c)
                for f, c in zip(batch.schema.fields, batch.columns)]
    descriptors = []
    section_pos = 0
    flat = []
    for field, bufs in zip(batch.schema.fields, raw_cols):
        col_desc = []
        for name in column_buffer_names(field):
            raw = bufs[name]
            col_desc.append([section_pos, len(raw)])
            flat.append(raw)
            section_pos = _align8(section_pos + len(raw))
        descriptors.append(col_desc)

    header = canonical_json_bytes({
        "columns": descriptors,
        "rows": batch.rows,
        "schema": batch.schema.to_json(),
    })
    section_start = _align8(8 + len(header))
    total = section_start + section_pos + 8

    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(header))
    out += header
    out += b"\x00" * (section_start - 8 - len(header))
    pos = 0
    for raw in flat:
        out += raw
        pad = _align8(pos + len(raw)) - (pos + len(raw))
        out += b"\x00" * pad
        pos = _align8(pos + len(raw))
    out += struct.pack("<Q", total)
    assert len(out) == total
    return bytes(out)


def _parse_frame_header(buf, offset: int):
    """Returns (schema, rows, descriptors, section_start, total_len)."""
    end = len(buf)
    if end - offset < 16:
        raise MalformedFrame(f"truncated frame at offset {offset}")
    if bytes(buf[offset:offset + 4]) != MAGIC:
        raise MalformedFrame(f"bad magic at offset {offset}")
    (header_len,) = struct.unpack_from("<I", buf, offset + 4)
    header_end = offset + 8 + header_len
    if header_end > end:
        raise MalformedFrame("truncated frame header")
    try:
        header = json.loads(bytes(buf[offset + 8:header_end]).decode("utf-8"))
        schema = Schema.from_json(header["schema"])
        rows = int(header["rows"])
        descriptors = header["columns"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFrame(f"unreadable frame header: {exc}") from None
    section_start = offset + _align8(8 + header_len)

    section_len = 0
    if len(descriptors) != len(schema.fields):
        raise MalformedFrame("descriptor count does not match schema")
    for field, col_desc in zip(schema.fields, descriptors):
        if len(col_desc) != len(column_buffer_names(field)):
            raise MalformedFrame(f"wrong buffer count for column {field.name!r}")
        for buf_off, buf_len in col_desc:
            if buf_off % 8 != 0:
                raise MalformedFrame(f"misaligned buffer at section offset {buf_off}")
            section_len = max(section_len, _align8(buf_off + buf_len))

    total = (section_start - offset) + section_len + 8
    if offset + total > end:
        raise MalformedFrame("truncated frame body")
    (trailer,) = struct.unpack_from("<Q", buf, offset + total - 8)
    if trailer != total:
        raise ChecksumMismatch(
            f"frame length check failed: trailer {trailer} != {total}")
    return schema, rows, descriptors, section_start, total


def decode_batch(region: BufferRegion, offset: int = 0) -> RecordBatch:
    """Zero-copy view over one frame; increments the region refcount."""
    batch, _ = decode_batch_at(region, offset)
    return batch


def decode_batch_at(region: BufferRegion, offset: int = 0):
    """Like decode_batch, also returning the offset just past the frame."""
    buf = region.buf
    schema, rows, descriptors, section_start, total = _parse_frame_header(buf, offset)
    cols = []
    for field, col_desc in zip(schema.fields, descriptors):
        names = column_buffer_names(field)
        buffers = {}
        for name, (buf_off, buf_len) in zip(names, col_desc):
            start = section_start + buf_off
            buffers[name] = buf[start:start + buf_len]
        cols.append(decode_column(field, rows, buffers))
    region.retain()
    return RecordBatch(schema, cols, rows=rows), offset + total


def frame_length(buf, offset: int = 0) -> int:
    _, _, _, _, total = _parse_frame_header(buf, offset)
    return total


def encode_table_frames(table: Table) -> bytes:
    """One CBUF frame per batch, concatenated (the external-file contract)."""
    if not table.batches:
        return encode_batch(RecordBatch(table.schema, [
            _empty_column(f) for f in table.schema.fields], rows=0))
    return b"".join(encode_batch(b) for b in table.batches)


def _empty_column(field: Field) -> ColumnVector:
    validity = np.zeros(0, dtype=np.bool_) if field.nullable else None
    if field.dtype == "utf8":
        return ColumnVector("utf8", 0, validity,
                            offsets=np.zeros(1, dtype=np.int32),
                            data=np.zeros(0, dtype=np.uint8))
    return ColumnVector(field.dtype, 0, validity,
                        values=np.zeros(0, dtype=NUMPY_DTYPE[field.dtype]))


def decode_frames(region: BufferRegion, offset: int = 0, end=None) -> Table:
    """Decode concatenated frames sharing one schema into a table."""
    end = len(region.buf) if end is None else end
    batches = []
    while offset < end:
        batch, offset = decode_batch_at(region, offset)
        batches.append(batch)
    if not batches:
        raise MalformedFrame("no frames present")
    return Table(batches[0].schema, batches)
