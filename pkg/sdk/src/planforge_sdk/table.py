"""Minimal columnar table adapter and the CBUF wire codec.

This is an independent, stdlib-only implementation of the interchange
frame so SDK-built processes can exchange tables with the runtime without
depending on it.  Frame layout (little-endian):

    magic "CBF1" · u32 header length · canonical-JSON header
    {"columns": [[ [offset,length], ... ]], "rows": N, "schema": {...}}
    · zero pad to an 8-byte boundary · buffer section (each buffer starts
    8-aligned, offsets section-relative) · u64 total frame length

Per column: validity bitmap (nullable only; LSB-first, 1 = valid), then a
values buffer for fixed-width dtypes or offsets (int32, rows+1) plus data
bytes for utf8.  Null payload slots are zeroed.  A file may hold several
frames back to back, all sharing one schema.
"""

import datetime
import json
import struct

MAGIC = b"CBF1"

DTYPES = ("int64", "float64", "bool", "utf8", "date32")
_PACK = {"int64": "<q", "float64": "<d", "bool": "<B", "date32": "<i"}
_EPOCH = datetime.date(1970, 1, 1)


class TableError(ValueError):
    pass


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


def _align8(n: int) -> int:
    return (n + 7) & ~7


class Table:
    """Schema-bearing columns of plain Python values (None = null)."""

    def __init__(self, schema, columns):
        self.schema = [(str(n), str(d), bool(nul)) for n, d, nul in schema]
        names = [n for n, _, _ in self.schema]
        if len(set(names)) != len(names):
            raise TableError(f"duplicate column names: {names}")
        for _, dtype, _ in self.schema:
            if dtype not in DTYPES:
                raise TableError(f"unsupported dtype {dtype!r}")
        self.columns = {n: list(columns[n]) for n, _, _ in self.schema}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise TableError("columns must share one length")
        self._rows = lengths.pop() if lengths else 0
        for name, dtype, nullable in self.schema:
            if not nullable and any(v is None for v in self.columns[name]):
                raise TableError(f"null in non-nullable column {name!r}")

    @property
    def num_rows(self) -> int:
        return self._rows

    @property
    def column_names(self):
        return [n for n, _, _ in self.schema]

    def column(self, name):
        return self.columns[name]

    def to_pydict(self) -> dict:
        return {n: list(v) for n, v in self.columns.items()}

    def rows(self):
        names = self.column_names
        for i in range(self._rows):
            yield {n: self.columns[n][i] for n in names}

    def filter_rows(self, predicate) -> "Table":
        keep = [row for row in self.rows() if predicate(row)]
        return Table(self.schema, {n: [r[n] for r in keep]
                                   for n in self.column_names})

    def select(self, names) -> "Table":
        fields = [f for f in self.schema if f[0] in set(names)]
        ordered = [next(f for f in fields if f[0] == n) for n in names]
        return Table(ordered, {n: self.columns[n] for n in names})

    def __eq__(self, other):
        return (isinstance(other, Table) and self.schema == other.schema
                and self.to_pydict() == other.to_pydict())


def _coerce(dtype, value):
    if value is None:
        return None
    if dtype == "int64":
        return int(value)
    if dtype == "float64":
        return float(value)
    if dtype == "bool":
        return bool(value)
    if dtype == "utf8":
        if not isinstance(value, str):
            raise TableError(f"utf8 column holds non-string {value!r}")
        return value
    if isinstance(value, str):
        value = datetime.date.fromisoformat(value)
    if isinstance(value, datetime.date):
        return (value - _EPOCH).days
    if isinstance(value, int):
        return value
    raise TableError(f"cannot interpret {value!r} as date32")


def _pack_validity(flags) -> bytes:
    out = bytearray((len(flags) + 7) // 8)
    for i, ok in enumerate(flags):
        if ok:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def _unpack_validity(raw: bytes, length: int):
    return [bool(raw[i // 8] >> (i % 8) & 1) for i in range(length)]


def encode_table(table: Table) -> bytes:
    """One CBUF frame holding the whole table."""
    buffers = []  # flat buffer list in column order
    descriptors = []
    section = 0
    schema_doc = {"fields": [{"name": n, "dtype": d, "nullable": nul}
                             for n, d, nul in table.schema]}
    for name, dtype, nullable in table.schema:
        values = [_coerce(dtype, v) for v in table.columns[name]]
        col_desc = []
        raws = []
        if nullable:
            raws.append(_pack_validity([v is not None for v in values]))
        if dtype == "utf8":
            encoded = [v.encode("utf-8") if v is not None else b"" for v in values]
            offsets = [0]
            for piece in encoded:
                offsets.append(offsets[-1] + len(piece))
            raws.append(struct.pack(f"<{len(offsets)}i", *offsets))
            raws.append(b"".join(encoded))
        else:
            fmt = _PACK[dtype]
            zero = False if dtype == "bool" else 0
            raws.append(b"".join(
                struct.pack(fmt, v if v is not None else zero) for v in values))
        for raw in raws:
            col_desc.append([section, len(raw)])
            buffers.append(raw)
            section = _align8(section + len(raw))
        descriptors.append(col_desc)

    header = _canonical_json({"columns": descriptors, "rows": table.num_rows,
                              "schema": schema_doc})
    section_start = _align8(8 + len(header))
    total = section_start + section + 8
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(header))
    out += header
    out += b"\x00" * (section_start - 8 - len(header))
    pos = 0
    for raw in buffers:
        out += raw
        pad = _align8(pos + len(raw)) - (pos + len(raw))
        out += b"\x00" * pad
        pos = _align8(pos + len(raw))
    out += struct.pack("<Q", total)
    return bytes(out)


def _decode_frame(data: bytes, offset: int):
    if len(data) - offset < 16 or data[offset:offset + 4] != MAGIC:
        raise TableError(f"not a CBUF frame at offset {offset}")
    (header_len,) = struct.unpack_from("<I", data, offset + 4)
    header = json.loads(data[offset + 8:offset + 8 + header_len].decode("utf-8"))
    section = offset + _align8(8 + header_len)
    rows = header["rows"]
    schema = [(f["name"], f["dtype"], f["nullable"])
              for f in header["schema"]["fields"]]
    section_len = 0
    for descs in header["columns"]:
        for buf_off, buf_len in descs:
            section_len = max(section_len, _align8(buf_off + buf_len))
    total = (section - offset) + section_len + 8
    if offset + total > len(data):
        raise TableError("truncated frame")
    (trailer,) = struct.unpack_from("<Q", data, offset + total - 8)
    if trailer != total:
        raise TableError("frame length check failed")
    columns = {}
    for (name, dtype, nullable), descs in zip(schema, header["columns"]):
        descs = list(descs)
        valid = [True] * rows
        if nullable:
            buf_off, buf_len = descs.pop(0)
            valid = _unpack_validity(data[section + buf_off:
                                          section + buf_off + buf_len], rows)
        if dtype == "utf8":
            (o_off, o_len), (d_off, d_len) = descs
            offsets = struct.unpack_from(f"<{rows + 1}i", data, section + o_off)
            blob = data[section + d_off:section + d_off + d_len]
            values = [blob[offsets[i]:offsets[i + 1]].decode("utf-8")
                      if valid[i] else None for i in range(rows)]
        else:
            (v_off, v_len) = descs[0]
            fmt = _PACK[dtype]
            width = struct.calcsize(fmt)
            raw = [struct.unpack_from(fmt, data, section + v_off + i * width)[0]
                   for i in range(rows)]
            if dtype == "bool":
                values = [bool(v) if ok else None for v, ok in zip(raw, valid)]
            elif dtype == "date32":
                values = [_EPOCH + datetime.timedelta(days=v) if ok else None
                          for v, ok in zip(raw, valid)]
            else:
                values = [v if ok else None for v, ok in zip(raw, valid)]
        columns[name] = values
    return Table(schema, columns), offset + total


def decode_table(data: bytes) -> Table:
    """Decode one or more concatenated frames sharing a schema."""
    tables = []
    offset = 0
    while offset < len(data):
        table, offset = _decode_frame(data, offset)
        tables.append(table)
    if not tables:
        raise TableError("no frames present")
    if len(tables) == 1:
        return tables[0]
    base = tables[0]
    merged = {n: list(base.columns[n]) for n in base.column_names}
    for t in tables[1:]:
        if t.schema != base.schema:
            raise TableError("frames disagree on schema")
        for n in base.column_names:
            merged[n].extend(t.columns[n])
    return Table(base.schema, merged)


def read_table_file(path) -> Table:
    with open(path, "rb") as f:
        return decode_table(f.read())


def write_table_file(path, table: Table):
    with open(path, "wb") as f:
        f.write(encode_table(table))
