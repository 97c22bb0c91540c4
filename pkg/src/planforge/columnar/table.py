"""In-memory columnar vectors, record batches and tables.

Validity is held as an unpacked boolean array (1 = valid) and only packed
to an LSB-first bitmap at the frame boundary.  Payload slots under nulls
are always zeroed so that encoding equal batches is byte-deterministic.
"""

import datetime

import numpy as np

from .schema import NUMPY_DTYPE, Schema, check_dtype

EPOCH = datetime.date(1970, 1, 1)


class ColumnVector:
    """One column of a record batch.

    Fixed-width dtypes carry a ``values`` array; utf8 carries 32-bit signed
    ``offsets`` (length+1 entries) plus a ``data`` byte array.  ``validity``
    is None iff the column is non-nullable.
    """

    __slots__ = ("dtype", "length", "validity", "values", "offsets", "data")

    def __init__(self, dtype, length, validity=None, values=None, offsets=None, data=None):
        check_dtype(dtype)
        self.dtype = dtype
        self.length = int(length)
        self.validity = validity
        self.values = values
        self.offsets = offsets
        self.data = data
        self._check()

    def _check(self, deep: bool = True):
        if self.validity is not None:
            if self.validity.dtype != np.bool_ or len(self.validity) != self.length:
                raise ValueError("validity must be a bool array of column length")
        if self.dtype == "utf8":
            if self.offsets is None or self.data is None:
                raise ValueError("utf8 column requires offsets and data buffers")
            if self.offsets.dtype != np.int32 or len(self.offsets) != self.length + 1:
                raise ValueError("utf8 offsets must be int32 with length+1 entries")
            if len(self.offsets) and self.offsets[0] != 0:
                raise ValueError("first offset must be 0")
            if deep and np.any(np.diff(self.offsets) < 0):
                raise ValueError("offsets must be monotonically non-decreasing")
            if int(self.offsets[-1]) != len(self.data):
                raise ValueError("last offset must equal data length")
        else:
            if self.values is None:
                raise ValueError(f"{self.dtype} column requires a values buffer")
            if len(self.values) != self.length:
                raise ValueError("values buffer length must equal column length")
            if self.values.dtype != NUMPY_DTYPE[self.dtype]:
                raise ValueError(
                    f"values dtype {self.values.dtype} does not match {self.dtype}")

    @classmethod
    def view_over(cls, dtype, length, validity=None, values=None, offsets=None,
                  data=None):
        """Zero-copy construction: O(1) structural checks only.

        For buffers produced by this codec (frame length check already
        passed); skips the O(n) offsets monotonicity scan that would
        defeat zero-copy decoding.
        """
        self = object.__new__(cls)
        self.dtype = dtype
        self.length = int(length)
        self.validity = validity
        self.values = values
        self.offsets = offsets
        self.data = data
        self._check(deep=False)
        return self

    def valid_mask(self) -> np.ndarray:
        if self.validity is None:
            return np.ones(self.length, dtype=np.bool_)
        return self.validity

    def null_count(self) -> int:
        if self.validity is None:
            return 0
        return int(self.length - np.count_nonzero(self.validity))

    def nbytes(self) -> int:
        total = 0
        if self.validity is not None:
            total += (self.length + 7) // 8
        if self.dtype == "utf8":
            total += self.offsets.nbytes + self.data.nbytes
        else:
            total += self.values.nbytes
        return total

    def to_pylist(self):
        valid = self.valid_mask()
        if self.dtype == "utf8":
            out = []
            data = self.data.tobytes()
            for i in range(self.length):
                if not valid[i]:
                    out.append(None)
                else:
                    out.append(data[self.offsets[i]:self.offsets[i + 1]].decode("utf-8"))
            return out
        if self.dtype == "date32":
            return [EPOCH + datetime.timedelta(days=int(v)) if ok else None
                    for v, ok in zip(self.values, valid)]
        if self.dtype == "bool":
            return [bool(v) if ok else None for v, ok in zip(self.values, valid)]
        if self.dtype == "int64":
            return [int(v) if ok else None for v, ok in zip(self.values, valid)]
        return [float(v) if ok else None for v, ok in zip(self.values, valid)]


class RecordBatch:
    __slots__ = ("schema", "columns", "rows")

    def __init__(self, schema: Schema, columns, rows=None):
        self.schema = schema
        self.columns = list(columns)
        if len(self.columns) != len(schema):
            raise ValueError("column count must match schema")
        lengths = {c.length for c in self.columns}
        if rows is None:
            rows = lengths.pop() if lengths else 0
        if lengths and lengths != {rows}:
            raise ValueError("all columns must have the same length")
        for f, c in zip(schema.fields, self.columns):
            if c.dtype != f.dtype:
                raise ValueError(f"column {f.name}: dtype {c.dtype} != schema {f.dtype}")
            if not f.nullable and c.validity is not None:
                raise ValueError(f"column {f.name}: non-nullable field carries validity")
            if f.nullable and c.validity is None:
                raise ValueError(f"column {f.name}: nullable field missing validity")
        self.rows = int(rows)

    def column(self, name: str) -> ColumnVector:
        return self.columns[self.schema.index(name)]

    def nbytes(self) -> int:
        return sum(c.nbytes() for c in self.columns)

    def to_pydict(self) -> dict:
        return {f.name: c.to_pylist() for f, c in zip(self.schema.fields, self.columns)}


class Table:
    __slots__ = ("schema", "batches")

    def __init__(self, schema: Schema, batches):
        self.schema = schema
        self.batches = list(batches)
        for b in self.batches:
            if b.schema != schema:
                raise ValueError("all batch schemas must be identical")

    @property
    def rows(self) -> int:
        return sum(b.rows for b in self.batches)

    def nbytes(self) -> int:
        return sum(b.nbytes() for b in self.batches)

    def to_pydict(self) -> dict:
        out = {name: [] for name in self.schema.names}
        for b in self.batches:
            for name, vals in b.to_pydict().items():
                out[name].extend(vals)
        return out

    def combined(self) -> RecordBatch:
        """All rows as a single batch (copies when multiple batches exist)."""
        if len(self.batches) == 1:
            return self.batches[0]
        return concat_batches(self.schema, self.batches)


# --- construction helpers ---

def _as_date32(v) -> int:
    if isinstance(v, bool):
        raise TypeError("bool is not a date")
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        v = datetime.date.fromisoformat(v)
    if isinstance(v, datetime.date):
        return (v - EPOCH).days
    raise TypeError(f"cannot interpret {v!r} as date32")


def make_column(dtype, nullable, values=None, validity=None, offsets=None, data=None):
    """Build a column from numpy buffers, zeroing payload slots under nulls."""
    if not nullable:
        validity = None
    elif validity is None:
        length = len(offsets) - 1 if dtype == "utf8" else len(values)
        validity = np.ones(length, dtype=np.bool_)
    else:
        validity = np.ascontiguousarray(validity, dtype=np.bool_)
    if dtype == "utf8":
        offsets = np.ascontiguousarray(offsets, dtype=np.int32)
        data = np.ascontiguousarray(data, dtype=np.uint8)
        length = len(offsets) - 1
        if validity is not None and not validity.all():
            # rebuild with empty slices under nulls
            lens = np.diff(offsets)
            lens[~validity] = 0
            new_offsets = np.zeros(length + 1, dtype=np.int32)
            np.cumsum(lens, out=new_offsets[1:])
            pieces = [data[offsets[i]:offsets[i + 1]] for i in range(length) if validity[i]]
            data = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.uint8)
            offsets = new_offsets
        return ColumnVector("utf8", length, validity, offsets=offsets, data=data)
    values = np.ascontiguousarray(values, dtype=NUMPY_DTYPE[dtype])
    if validity is not None and not validity.all():
        values = values.copy()
        values[~validity] = 0
    return ColumnVector(dtype, len(values), validity, values=values)


def column_from_pylist(dtype, nullable, pyvals) -> ColumnVector:
    check_dtype(dtype)
    n = len(pyvals)
    validity = np.array([v is not None for v in pyvals], dtype=np.bool_)
    if not nullable and not validity.all():
        raise ValueError("null in non-nullable column")
    if dtype == "utf8":
        encoded = [v.encode("utf-8") if v is not None else b"" for v in pyvals]
        offsets = np.zeros(n + 1, dtype=np.int32)
        if n:
            offsets[1:] = np.cumsum([len(b) for b in encoded])
        data = np.frombuffer(b"".join(encoded), dtype=np.uint8).copy()
        return make_column("utf8", nullable, validity=validity, offsets=offsets, data=data)
    if dtype == "date32":
        ints = [(_as_date32(v) if v is not None else 0) for v in pyvals]
        values = np.array(ints, dtype=np.int32)
    elif dtype == "bool":
        values = np.array([1 if v else 0 for v in pyvals], dtype=np.uint8)
    else:
        values = np.array([v if v is not None else 0 for v in pyvals],
                          dtype=NUMPY_DTYPE[dtype])
    return make_column(dtype, nullable, values=values, validity=validity)


def batch_from_pydict(schema: Schema, columns: dict) -> RecordBatch:
    cols = [column_from_pylist(f.dtype, f.nullable, columns[f.name])
            for f in schema.fields]
    return RecordBatch(schema, cols)


def table_from_pydict(schema: Schema, columns: dict, batch_rows=None) -> Table:
    batch = batch_from_pydict(schema, columns)
    if batch_rows is None or batch.rows == 0:
        return Table(schema, [batch])
    batches = [slice_batch(batch, i, min(i + batch_rows, batch.rows))
               for i in range(0, batch.rows, batch_rows)]
    return Table(schema, batches)


def slice_batch(batch: RecordBatch, start: int, stop: int) -> RecordBatch:
    cols = []
    for f, c in zip(batch.schema.fields, batch.columns):
        validity = c.validity[start:stop] if c.validity is not None else None
        if f.dtype == "utf8":
            base = int(c.offsets[start])
            offsets = (c.offsets[start:stop + 1] - base).astype(np.int32)
            data = c.data[base:int(c.offsets[stop])]
            cols.append(ColumnVector("utf8", stop - start, validity,
                                     offsets=offsets, data=data))
        else:
            cols.append(ColumnVector(f.dtype, stop - start, validity,
                                     values=c.values[start:stop]))
    return RecordBatch(batch.schema, cols, rows=stop - start)


def concat_batches(schema: Schema, batches) -> RecordBatch:
    rows = sum(b.rows for b in batches)
    cols = []
    for i, f in enumerate(schema.fields):
        parts = [b.columns[i] for b in batches]
        validity = None
        if f.nullable:
            validity = (np.concatenate([p.validity for p in parts])
                        if parts else np.zeros(0, dtype=np.bool_))
        if f.dtype == "utf8":
            data = (np.concatenate([p.data for p in parts])
                    if parts else np.zeros(0, dtype=np.uint8))
            offsets = np.zeros(rows + 1, dtype=np.int32)
            pos = 0
            base = 0
            for p in parts:
                offsets[pos + 1:pos + p.length + 1] = p.offsets[1:] + base
                pos += p.length
                base += len(p.data)
            cols.append(ColumnVector("utf8", rows, validity, offsets=offsets, data=data))
        else:
            values = (np.concatenate([p.values for p in parts])
                      if parts else np.zeros(0, dtype=NUMPY_DTYPE[f.dtype]))
            cols.append(ColumnVector(f.dtype, rows, validity, values=values))
    return RecordBatch(schema, cols, rows=rows)


# --- equality (column-wise, null positions included) ---

def columns_equal(a: ColumnVector, b: ColumnVector) -> bool:
    if a.dtype != b.dtype or a.length != b.length:
        return False
    av, bv = a.valid_mask(), b.valid_mask()
    if not np.array_equal(av, bv):
        return False
    if a.dtype == "utf8":
        return (np.array_equal(a.offsets, b.offsets)
                and np.array_equal(a.data, b.data))
    if a.dtype == "float64":
        return np.array_equal(a.values, b.values, equal_nan=True)
    return np.array_equal(a.values, b.values)


def batches_equal(a: RecordBatch, b: RecordBatch) -> bool:
    if a.schema != b.schema or a.rows != b.rows:
        return False
    return all(columns_equal(x, y) for x, y in zip(a.columns, b.columns))


def tables_equal(a: Table, b: Table) -> bool:
    """Row-wise equality irrespective of batch boundaries."""
    if a.schema != b.schema or a.rows != b.rows:
        return False
    return batches_equal(a.combined(), b.combined())
