"""Predicate expressions shared by the plan compiler and the runtime.

Grammar: identifiers; literals int / float / 'string' / dates (bare
YYYY-MM-DD or DATE 'YYYY-MM-DD'); comparison operators = != < <= > >=;
BETWEEN x AND y; IN (list); AND, OR, NOT; parentheses.

Evaluation is SQL-style three-valued: a comparison against a null slot is
unknown, and only definitely-true rows match.  The same AST also evaluates
against chunk min/max statistics to decide whether a chunk can possibly
contain a matching row (pruning must never drop a potential match).
"""

import datetime
import re
from dataclasses import dataclass

import numpy as np

from .canon import sha256_hex
from .errors import BadExpr, ExprTypeError, UnknownColumn

# --- AST ---

@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Lit:
    kind: str  # int | float | str | date
    value: object  # date stored as days since epoch


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Between:
    operand: object
    low: object
    high: object


@dataclass(frozen=True)
class InList:
    operand: object
    items: tuple


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    operand: object


_EPOCH = datetime.date(1970, 1, 1)


def _date_to_days(text: str) -> int:
    return (datetime.date.fromisoformat(text) - _EPOCH).days


# --- lexer ---

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<date>\d{4}-\d{2}-\d{2}(?![\d.]))
  | (?P<float>-?\d+\.\d+(?:[eE][+-]?\d+)?|-?\d+[eE][+-]?\d+)
  | (?P<int>-?\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
""", re.VERBOSE)

_KEYWORDS = {"AND", "OR", "NOT", "BETWEEN", "IN", "DATE"}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise BadExpr(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value.upper() in _KEYWORDS:
                kind, value = "kw", value.upper()
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_kw(self, word):
        kind, value, pos = self.next()
        if kind != "kw" or value != word:
            raise BadExpr(f"expected {word}, found {value or 'end of input'}", pos)

    def parse(self):
        ast = self.parse_or()
        kind, value, pos = self.peek()
        if kind != "eof":
            raise BadExpr(f"unexpected trailing input {value!r}", pos)
        return ast

    def parse_or(self):
        node = self.parse_and()
        while self.peek()[:2] == ("kw", "OR"):
            self.next()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_not()
        while self.peek()[:2] == ("kw", "AND"):
            self.next()
            node = And(node, self.parse_not())
        return node

    def parse_not(self):
        if self.peek()[:2] == ("kw", "NOT"):
            self.next()
            return Not(self.parse_not())
        return self.parse_primary()

    def parse_primary(self):
        kind, value, pos = self.peek()
        if kind == "lparen":
            self.next()
            node = self.parse_or()
            kind, value, pos = self.next()
            if kind != "rparen":
                raise BadExpr("expected closing parenthesis", pos)
            return node
        return self.parse_comparison()

    def parse_operand(self):
        kind, value, pos = self.next()
        if kind == "ident":
            return Col(value)
        if kind == "int":
            return Lit("int", int(value))
        if kind == "float":
            return Lit("float", float(value))
        if kind == "date":
            return Lit("date", _date_to_days(value))
        if kind == "string":
            return Lit("str", value[1:-1].replace("''", "'"))
        if kind == "kw" and value == "DATE":
            skind, svalue, spos = self.next()
            if skind != "string":
                raise BadExpr("expected quoted date after DATE", spos)
            try:
                return Lit("date", _date_to_days(svalue[1:-1]))
            except ValueError:
                raise BadExpr(f"invalid date literal {svalue}", spos) from None
        raise BadExpr(f"expected column or literal, found {value or 'end of input'}", pos)

    def parse_comparison(self):
        operand = self.parse_operand()
        kind, value, pos = self.peek()
        if kind == "op":
            self.next()
            return Cmp(value, operand, self.parse_operand())
        if kind == "kw" and value == "BETWEEN":
            self.next()
            low = self.parse_operand()
            self.expect_kw("AND")
            return Between(operand, low, self.parse_operand())
        if kind == "kw" and value == "IN":
            self.next()
            kind, value, pos = self.next()
            if kind != "lparen":
                raise BadExpr("expected ( after IN", pos)
            items = [self.parse_operand()]
            while self.peek()[0] == "comma":
                self.next()
                items.append(self.parse_operand())
            kind, value, pos = self.next()
            if kind != "rparen":
                raise BadExpr("expected closing parenthesis in IN list", pos)
            return InList(operand, tuple(items))
        raise BadExpr(
            f"expected comparison operator, found {value or 'end of input'}", pos)


def parse_expr(text: str):
    if not isinstance(text, str) or not text.strip():
        raise BadExpr("empty expression", 0)
    return _Parser(text).parse()


# --- canonical rendering (feeds expression digests) ---

def render(node) -> str:
    if isinstance(node, Col):
        return node.name
    if isinstance(node, Lit):
        if node.kind == "str":
            return "'" + str(node.value).replace("'", "''") + "'"
        if node.kind == "date":
            return "DATE '" + (_EPOCH + datetime.timedelta(days=node.value)).isoformat() + "'"
        return repr(node.value)
    if isinstance(node, Cmp):
        return f"({render(node.left)} {node.op} {render(node.right)})"
    if isinstance(node, Between):
        return f"({render(node.operand)} BETWEEN {render(node.low)} AND {render(node.high)})"
    if isinstance(node, InList):
        return f"({render(node.operand)} IN ({', '.join(render(i) for i in node.items)}))"
    if isinstance(node, And):
        return f"({render(node.left)} AND {render(node.right)})"
    if isinstance(node, Or):
        return f"({render(node.left)} OR {render(node.right)})"
    if isinstance(node, Not):
        return f"(NOT {render(node.operand)})"
    raise TypeError(f"not an expression node: {node!r}")


def expr_digest(node) -> str:
    return sha256_hex(render(node).encode("utf-8"))


def referenced_columns(node) -> set:
    out = set()

    def walk(n):
        if isinstance(n, Col):
            out.add(n.name)
        elif isinstance(n, Cmp):
            walk(n.left), walk(n.right)
        elif isinstance(n, Between):
            walk(n.operand), walk(n.low), walk(n.high)
        elif isinstance(n, InList):
            walk(n.operand)
            for i in n.items:
                walk(i)
        elif isinstance(n, (And, Or)):
            walk(n.left), walk(n.right)
        elif isinstance(n, Not):
            walk(n.operand)

    walk(node)
    return out


# --- type checking ---

_KIND_OF_DTYPE = {"int64": "num", "float64": "num", "date32": "date",
                  "utf8": "str", "bool": "bool"}
_KIND_OF_LIT = {"int": "num", "float": "num", "str": "str", "date": "date"}

_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}$")


def _operand_kind(node, schema):
    if isinstance(node, Col):
        if node.name not in schema:
            raise UnknownColumn(f"unknown column {node.name!r} in predicate")
        return _KIND_OF_DTYPE[schema.field(node.name).dtype]
    return _KIND_OF_LIT[node.kind]


def _coerce(node, want_kind):
    """String literals shaped like ISO dates coerce when a date is wanted."""
    if (isinstance(node, Lit) and node.kind == "str" and want_kind == "date"
            and _DATE_RE.match(str(node.value))):
        return Lit("date", _date_to_days(node.value))
    return node


def _check_pair(left, right, schema, context):
    lk, rk = _operand_kind(left, schema), _operand_kind(right, schema)
    if lk != rk:
        right2 = _coerce(right, lk)
        left2 = _coerce(left, rk)
        if right2 is not right:
            return left, right2
        if left2 is not left:
            return left2, right
        raise ExprTypeError(f"cannot compare {lk} with {rk} in {context}")
    if lk == "bool":
        raise ExprTypeError(f"bool columns are not comparable in {context}")
    return left, right


def type_check(node, schema):
    """Validate and coerce an AST against a schema; returns the checked AST."""
    if isinstance(node, Cmp):
        left, right = _check_pair(node.left, node.right, schema, render(node))
        return Cmp(node.op, left, right)
    if isinstance(node, Between):
        operand, low = _check_pair(node.operand, node.low, schema, render(node))
        operand, high = _check_pair(operand, node.high, schema, render(node))
        return Between(operand, low, high)
    if isinstance(node, InList):
        operand = node.operand
        items = []
        for item in node.items:
            operand, item = _check_pair(operand, item, schema, render(node))
            items.append(item)
        return InList(operand, tuple(items))
    if isinstance(node, And):
        return And(type_check(node.left, schema), type_check(node.right, schema))
    if isinstance(node, Or):
        return Or(type_check(node.left, schema), type_check(node.right, schema))
    if isinstance(node, Not):
        return Not(type_check(node.operand, schema))
    raise ExprTypeError(f"predicate must be boolean, got {render(node)}")


# --- row-wise evaluation (three-valued) ---

def _operand_arrays(node, batch):
    """Returns (values, null_mask) aligned to the batch rows."""
    rows = batch.rows
    if isinstance(node, Col):
        col = batch.column(node.name)
        nulls = ~col.valid_mask()
        if col.dtype == "utf8":
            values = np.array(
                [s if s is not None else "" for s in col.to_pylist()], dtype=object)
        elif col.dtype == "bool":
            values = col.values.astype(np.bool_)
        else:
            values = col.values
        return values, nulls
    value = node.value
    if node.kind == "str":
        arr = np.empty(rows, dtype=object)
        arr[:] = value
        return arr, np.zeros(rows, dtype=np.bool_)
    return np.full(rows, value), np.zeros(rows, dtype=np.bool_)


_CMP_FUNCS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _eval3(node, batch):
    """Kleene evaluation: returns (is_true, is_null) boolean arrays."""
    if isinstance(node, Cmp):
        lv, ln = _operand_arrays(node.left, batch)
        rv, rn = _operand_arrays(node.right, batch)
        nulls = ln | rn
        result = np.asarray(_CMP_FUNCS[node.op](lv, rv), dtype=np.bool_)
        return result & ~nulls, nulls
    if isinstance(node, Between):
        return _eval3(And(Cmp(">=", node.operand, node.low),
                          Cmp("<=", node.operand, node.high)), batch)
    if isinstance(node, InList):
        parts = Cmp("=", node.operand, node.items[0])
        for item in node.items[1:]:
            parts = Or(parts, Cmp("=", node.operand, item))
        return _eval3(parts, batch)
    if isinstance(node, And):
        lt, ln = _eval3(node.left, batch)
        rt, rn = _eval3(node.right, batch)
        lf = ~lt & ~ln
        rf = ~rt & ~rn
        is_false = lf | rf
        is_true = lt & rt
        return is_true, ~is_true & ~is_false
    if isinstance(node, Or):
        lt, ln = _eval3(node.left, batch)
        rt, rn = _eval3(node.right, batch)
        is_true = lt | rt
        is_false = (~lt & ~ln) & (~rt & ~rn)
        return is_true, ~is_true & ~is_false
    if isinstance(node, Not):
        t, n = _eval3(node.operand, batch)
        return ~t & ~n, n
    raise ExprTypeError(f"cannot evaluate {node!r} as a predicate")


def eval_predicate(node, batch) -> np.ndarray:
    """Boolean match mask over the batch; null comparisons never match."""
    checked = type_check(node, batch.schema)
    is_true, _ = _eval3(checked, batch)
    return is_true


# --- stats-interval evaluation (chunk pruning) ---

T, F, N = "T", "F", "N"
_ALL = frozenset((T, F, N))


def _kleene_and(a, b):
    out = set()
    for x in a:
        for y in b:
            if x == F or y == F:
                out.add(F)
            elif x == N or y == N:
                out.add(N)
            else:
                out.add(T)
    return frozenset(out)


def _kleene_or(a, b):
    out = set()
    for x in a:
        for y in b:
            if x == T or y == T:
                out.add(T)
            elif x == N or y == N:
                out.add(N)
            else:
                out.add(F)
    return frozenset(out)


def _kleene_not(a):
    return frozenset({T: F, F: T, N: N}[x] for x in a)


def _cmp_outcomes(op, lo, hi, lit):
    """Possible comparison outcomes for values within [lo, hi]."""
    out = set()
    if op == "=":
        if lo <= lit <= hi:
            out.add(T)
        if not (lo == hi == lit):
            out.add(F)
    elif op == "!=":
        if not (lo == hi == lit):
            out.add(T)
        if lo <= lit <= hi:
            out.add(F)
    elif op == "<":
        if lo < lit:
            out.add(T)
        if hi >= lit:
            out.add(F)
    elif op == "<=":
        if lo <= lit:
            out.add(T)
        if hi > lit:
            out.add(F)
    elif op == ">":
        if hi > lit:
            out.add(T)
        if lo <= lit:
            out.add(F)
    elif op == ">=":
        if hi >= lit:
            out.add(T)
        if lo < lit:
            out.add(F)
    return out


def _stats_cmp(node, stats):
    # stats: {column: {"min":…, "max":…, "null_count":…}} plus "__rows__"
    col, lit, op = None, None, node.op
    if isinstance(node.left, Col) and isinstance(node.right, Lit):
        col, lit = node.left, node.right
    elif isinstance(node.right, Col) and isinstance(node.left, Lit):
        flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
        col, lit, op = node.right, node.left, flip[node.op]
    else:
        return _ALL  # column-vs-column or literal-vs-literal: no pruning
    info = stats.get(col.name)
    if info is None:
        return _ALL
    rows = stats.get("__rows__", 0)
    nulls = int(info.get("null_count", 0))
    out = set()
    if nulls > 0:
        out.add(N)
    if nulls >= rows:
        return frozenset(out) if out else _ALL
    lo, hi = info.get("min"), info.get("max")
    if lo is None or hi is None:
        return frozenset(out | {T, F})
    out |= _cmp_outcomes(op, lo, hi, lit.value)
    return frozenset(out)


def _stats_outcomes(node, stats):
    if isinstance(node, Cmp):
        return _stats_cmp(node, stats)
    if isinstance(node, Between):
        return _kleene_and(
            _stats_outcomes(Cmp(">=", node.operand, node.low), stats),
            _stats_outcomes(Cmp("<=", node.operand, node.high), stats))
    if isinstance(node, InList):
        out = _stats_outcomes(Cmp("=", node.operand, node.items[0]), stats)
        for item in node.items[1:]:
            out = _kleene_or(out, _stats_outcomes(Cmp("=", node.operand, item), stats))
        return out
    if isinstance(node, And):
        return _kleene_and(_stats_outcomes(node.left, stats),
                           _stats_outcomes(node.right, stats))
    if isinstance(node, Or):
        return _kleene_or(_stats_outcomes(node.left, stats),
                          _stats_outcomes(node.right, stats))
    if isinstance(node, Not):
        return _kleene_not(_stats_outcomes(node.operand, stats))
    return _ALL


def chunk_may_match(node, column_stats: dict, rows: int) -> bool:
    """False only when the statistics prove no row in the chunk can match."""
    if rows == 0:
        return False
    stats = dict(column_stats)
    stats["__rows__"] = rows
    return T in _stats_outcomes(node, stats)
