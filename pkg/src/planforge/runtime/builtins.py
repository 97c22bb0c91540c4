"""Builtin operators: filter, project, aggregate.

Aggregate output is one row per distinct group key, sorted ascending by
key with nulls last, so repeated runs are byte-identical.  Nulls follow
SQL conventions: count skips nulls in its column; sum/min/max/avg skip
nulls and yield null for an all-null group.
"""

import numpy as np

from .. import expr as expr_mod
from .. import kernels
from ..columnar import ColumnVector, RecordBatch, Schema, Table
from ..columnar.schema import NUMPY_DTYPE, Field
from ..columnar.table import make_column
from ..errors import ExprTypeError, UnknownColumn


def take_batch(batch: RecordBatch, indices: np.ndarray) -> RecordBatch:
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    cols = []
    for f, c in zip(batch.schema.fields, batch.columns):
        validity = c.validity[indices] if c.validity is not None else None
        if f.dtype == "utf8":
            offsets, data = kernels.gather_utf8(
                np.ascontiguousarray(c.offsets),
                np.ascontiguousarray(c.data), indices)
            cols.append(ColumnVector("utf8", len(indices), validity,
                                     offsets=offsets, data=data))
        else:
            cols.append(ColumnVector(f.dtype, len(indices), validity,
                                     values=np.ascontiguousarray(c.values[indices])))
    return RecordBatch(batch.schema, cols, rows=len(indices))


def filter_table(table: Table, predicate) -> Table:
    if isinstance(predicate, str):
        predicate = expr_mod.parse_expr(predicate)
    predicate = expr_mod.type_check(predicate, table.schema)
    batches = []
    for batch in table.batches:
        mask = expr_mod.eval_predicate(predicate, batch)
        batches.append(take_batch(batch, np.nonzero(mask)[0]))
    return Table(table.schema, batches)


def project_table(table: Table, columns) -> Table:
    for name in columns:
        if name not in table.schema:
            raise UnknownColumn(f"projection column {name!r} not in schema")
    out_schema = table.schema.select(columns)
    batches = []
    for batch in table.batches:
        cols = [batch.column(name) for name in columns]
        batches.append(RecordBatch(out_schema, cols, rows=batch.rows))
    return Table(out_schema, batches)


# --- aggregation ---

def _factorize(col: ColumnVector, field: Field):
    """Codes in sort order with nulls coded last; returns (codes, decoder)."""
    valid = col.valid_mask()
    if field.dtype == "utf8":
        values = col.to_pylist()
        present = sorted({v for v in values if v is not None})
        mapping = {v: i for i, v in enumerate(present)}
        codes = np.array([mapping[v] if v is not None else len(present)
                          for v in values], dtype=np.int64)
    else:
        raw = col.values
        present = np.unique(raw[valid])
        codes = np.searchsorted(present, raw).astype(np.int64)
        codes[~valid] = len(present)
        present = present.tolist()
    n_codes = len(present) + (0 if valid.all() else 1)

    def decode(code_array):
        vals, validity = [], []
        for c in code_array:
            if c < len(present):
                vals.append(present[c])
                validity.append(True)
            else:
                vals.append(None)
                validity.append(False)
        return vals, np.array(validity, dtype=np.bool_)

    return codes, n_codes, decode


_NUMERIC = ("int64", "float64")
_ORDERABLE = ("int64", "float64", "date32", "bool", "utf8")


def _agg_output_field(func: str, field: Field, out_name: str) -> Field:
    if func == "count":
        return Field(out_name, "int64", False)
    if func == "avg":
        return Field(out_name, "float64", True)
    if func == "sum":
        return Field(out_name, field.dtype, True)
    return Field(out_name, field.dtype, True)  # min / max


def _check_agg(func: str, field: Field):
    if func in ("sum", "avg") and field.dtype not in _NUMERIC:
        raise ExprTypeError(f"{func} requires a numeric column, got {field.dtype}")
    if func in ("min", "max") and field.dtype not in _ORDERABLE:
        raise ExprTypeError(f"{func} cannot order dtype {field.dtype}")


def _grouped_utf8_min_max(func, col, codes, n_groups):
    values = col.to_pylist()
    best = [None] * n_groups
    for v, c in zip(values, codes):
        if v is None:
            continue
        cur = best[c]
        if cur is None or (v < cur if func == "min" else v > cur):
            best[c] = v
    validity = np.array([b is not None for b in best], dtype=np.bool_)
    return best, validity


def _aggregate_column(func, col: ColumnVector, field: Field, codes, n_groups):
    """Returns (values list or ndarray, validity ndarray)."""
    valid = col.valid_mask()
    if func == "count":
        counts = kernels.grouped_count(codes, valid, n_groups)
        return counts, np.ones(n_groups, dtype=np.bool_)
    if field.dtype == "utf8":
        return _grouped_utf8_min_max(func, col, codes, n_groups)
    values = col.values
    if func in ("sum", "avg"):
        if field.dtype == "int64" and func == "sum":
            sums, counts = kernels.grouped_sum_i64(codes, values, valid, n_groups)
        else:
            sums, counts = kernels.grouped_sum_f64(
                codes, values.astype(np.float64, copy=False), valid, n_groups)
        validity = counts > 0
        if func == "avg":
            out = np.zeros(n_groups, dtype=np.float64)
            np.divide(sums, counts, out=out, where=validity)
            return out, validity
        return sums, validity
    # min / max over fixed-width dtypes: run the kernel in a wide lane
    if field.dtype == "float64":
        mins, maxs, counts = kernels.grouped_min_max_f64(codes, values, valid,
                                                         n_groups)
    else:
        wide = values.astype(np.int64, copy=False)
        mins, maxs, counts = kernels.grouped_min_max_i64(codes, wide, valid,
                                                         n_groups)
    picked = mins if func == "min" else maxs
    validity = counts > 0
    out = np.where(validity, picked, 0)
    if field.dtype != "float64":
        out = out.astype(NUMPY_DTYPE[field.dtype])
    return out, validity


def aggregate_table(table: Table, spec) -> Table:
    schema = table.schema
    for name in spec.group_by:
        if name not in schema:
            raise UnknownColumn(f"group_by column {name!r} not in schema")
    for func, column, _ in spec.aggs:
        if column not in schema:
            raise UnknownColumn(f"aggregate column {column!r} not in schema")
        _check_agg(func, schema.field(column))

    batch = table.combined()
    rows = batch.rows

    # group identification: mixed-radix combine of per-key codes, then
    # compress to dense ids whose order is the lexicographic key order
    decoders = []
    if spec.group_by:
        key_codes, radices = [], []
        for name in spec.group_by:
            codes, n_codes, decode = _factorize(batch.column(name),
                                                schema.field(name))
            key_codes.append(codes)
            radices.append(max(n_codes, 1))
            decoders.append(decode)
        combined = np.zeros(rows, dtype=np.int64)
        for codes, radix in zip(key_codes, radices):
            combined = combined * radix + codes
        group_keys, inverse = np.unique(combined, return_inverse=True)
        inverse = inverse.astype(np.int64, copy=False)
        n_groups = len(group_keys)
        # recover per-key codes from the mixed radix for output decoding
        per_key_codes = []
        remainder = group_keys.copy()
        for radix in reversed(radices):
            per_key_codes.append(remainder % radix)
            remainder //= radix
        per_key_codes.reverse()
    else:
        n_groups = 1 if rows else 0
        inverse = np.zeros(rows, dtype=np.int64)
        per_key_codes = []

    out_fields = []
    out_columns = []
    for i, name in enumerate(spec.group_by):
        field = schema.field(name)
        vals, validity = decoders[i](per_key_codes[i])
        out_fields.append(field)
        out_columns.append((field, vals, validity))
    for func, column, out_name in spec.aggs:
        field = schema.field(column)
        out_field = _agg_output_field(func, field, out_name)
        values, validity = _aggregate_column(func, batch.column(column), field,
                                             inverse, n_groups)
        out_fields.append(out_field)
        out_columns.append((out_field, values, validity))

    out_schema = Schema(out_fields)
    cols = []
    for field, values, validity in out_columns:
        if isinstance(values, np.ndarray) and field.dtype != "utf8":
            cols.append(make_column(field.dtype, field.nullable,
                                    values=values, validity=validity))
        else:
            pyvals = [v if ok else None for v, ok in zip(values, validity)]
            from ..columnar.table import column_from_pylist
            cols.append(column_from_pylist(field.dtype, field.nullable, pyvals))
    return Table(out_schema, [RecordBatch(out_schema, cols, rows=n_groups)])


def eval_builtin(op: str, inputs, expr=None, project_columns=None,
                 aggregate=None) -> Table:
    """Evaluate one builtin transformation over its input tables."""
    if len(inputs) != 1:
        raise ExprTypeError(f"builtin {op} takes exactly one input table")
    table = inputs[0]
    if op == "filter":
        return filter_table(table, expr)
    if op == "project":
        return project_table(table, project_columns)
    if op == "aggregate":
        return aggregate_table(table, aggregate)
    raise ExprTypeError(f"unknown builtin op {op!r}")
