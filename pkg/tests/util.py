"""Shared test helpers: hypothesis strategies and independent oracles.

The oracles here deliberately re-derive results row by row in plain
Python, independent of the vectorized implementation paths they check.
"""

import datetime

from hypothesis import strategies as st

from planforge.columnar import Field, Schema, batch_from_pydict, table_from_pydict
from planforge import expr as expr_mod

DTYPES = ("int64", "float64", "bool", "utf8", "date32")

# grammar keywords are reserved and cannot name columns
_RESERVED = {"and", "or", "not", "between", "in", "date"}
_FIELD_NAMES = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True).filter(
    lambda s: s not in _RESERVED)


def value_strategy(dtype, nullable):
    base = {
        "int64": st.integers(min_value=-2**40, max_value=2**40),
        "float64": st.floats(allow_nan=False, allow_infinity=False, width=64),
        "bool": st.booleans(),
        "utf8": st.text(min_size=0, max_size=6),
        "date32": st.integers(min_value=-30000, max_value=30000),
    }[dtype]
    if nullable:
        return st.one_of(st.none(), base)
    return base


@st.composite
def schemas(draw, min_fields=1, max_fields=4, dtypes=DTYPES):
    n = draw(st.integers(min_fields, max_fields))
    names = draw(st.lists(_FIELD_NAMES, min_size=n, max_size=n, unique=True))
    fields = [Field(name, draw(st.sampled_from(dtypes)), draw(st.booleans()))
              for name in names]
    return Schema(fields)


@st.composite
def batches(draw, schema=None, min_rows=0, max_rows=24):
    if schema is None:
        schema = draw(schemas())
    rows = draw(st.integers(min_rows, max_rows))
    columns = {
        f.name: draw(st.lists(value_strategy(f.dtype, f.nullable),
                              min_size=rows, max_size=rows))
        for f in schema.fields
    }
    return batch_from_pydict(schema, columns)


@st.composite
def tables(draw, schema=None, min_rows=0, max_rows=24):
    batch = draw(batches(schema=schema, min_rows=min_rows, max_rows=max_rows))
    if batch.rows == 0:
        return table_from_pydict(batch.schema, batch.to_pydict())
    split = draw(st.integers(1, max(1, batch.rows)))
    return table_from_pydict(batch.schema, batch.to_pydict(), batch_rows=split)


# --- row-wise predicate oracle (SQL three-valued logic) ---

_EPOCH = datetime.date(1970, 1, 1)


def _normalize(v):
    if isinstance(v, datetime.date):
        return (v - _EPOCH).days
    return v


def _operand_value(node, row):
    if isinstance(node, expr_mod.Col):
        return _normalize(row[node.name])
    return node.value


def eval_row(node, row):
    """Returns True / False / None (unknown) for one row dict."""
    if isinstance(node, expr_mod.Cmp):
        left = _operand_value(node.left, row)
        right = _operand_value(node.right, row)
        if left is None or right is None:
            return None
        import operator
        ops = {"=": operator.eq, "!=": operator.ne, "<": operator.lt,
               "<=": operator.le, ">": operator.gt, ">=": operator.ge}
        return bool(ops[node.op](left, right))
    if isinstance(node, expr_mod.Between):
        return eval_row(expr_mod.And(
            expr_mod.Cmp(">=", node.operand, node.low),
            expr_mod.Cmp("<=", node.operand, node.high)), row)
    if isinstance(node, expr_mod.InList):
        acc = False
        for item in node.items:
            r = eval_row(expr_mod.Cmp("=", node.operand, item), row)
            if r is True:
                return True
            if r is None:
                acc = None
        return acc
    if isinstance(node, expr_mod.And):
        l, r = eval_row(node.left, row), eval_row(node.right, row)
        if l is False or r is False:
            return False
        if l is None or r is None:
            return None
        return True
    if isinstance(node, expr_mod.Or):
        l, r = eval_row(node.left, row), eval_row(node.right, row)
        if l is True or r is True:
            return True
        if l is None or r is None:
            return None
        return False
    if isinstance(node, expr_mod.Not):
        v = eval_row(node.operand, row)
        return None if v is None else not v
    raise TypeError(f"oracle cannot evaluate {node!r}")


def table_rows(table_or_batch):
    """Rows as a list of dicts, in order."""
    d = table_or_batch.to_pydict()
    names = list(d)
    n = len(d[names[0]]) if names else 0
    return [{name: d[name][i] for name in names} for i in range(n)]


def matching_rows(ast, table) -> list:
    """Oracle: rows where the predicate is definitely true."""
    return [row for row in table_rows(table) if eval_row(ast, row) is True]
