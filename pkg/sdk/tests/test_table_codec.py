"""SDK table codec: round trips and byte-level interop with the runtime."""

import datetime

import pytest

import planforge_sdk as pf
from planforge_sdk.table import TableError, decode_table, encode_table

SCHEMA = [
    ("id", "int64", False),
    ("usd", "float64", True),
    ("country", "utf8", True),
    ("when", "date32", True),
    ("flag", "bool", True),
]

DATA = {
    "id": [1, 2, 3],
    "usd": [10.0, None, 2.5],
    "country": ["IT", "FR", None],
    "when": [datetime.date(2023, 1, 15), None, datetime.date(2023, 3, 5)],
    "flag": [True, False, None],
}


def test_round_trip_all_dtypes():
    table = pf.Table(SCHEMA, DATA)
    back = decode_table(encode_table(table))
    assert back == table


def test_round_trip_empty():
    table = pf.Table(SCHEMA, {n: [] for n, _, _ in SCHEMA})
    back = decode_table(encode_table(table))
    assert back.num_rows == 0
    assert back.schema == table.schema


def test_multi_frame_concatenation():
    a = pf.Table(SCHEMA, DATA)
    payload = encode_table(a) + encode_table(a)
    merged = decode_table(payload)
    assert merged.num_rows == 6
    assert merged.column("id") == [1, 2, 3, 1, 2, 3]


def test_null_in_non_nullable_rejected():
    with pytest.raises(TableError):
        pf.Table([("id", "int64", False)], {"id": [1, None]})


def test_truncated_frame_rejected():
    payload = encode_table(pf.Table(SCHEMA, DATA))
    with pytest.raises(TableError):
        decode_table(payload[:-4])


# --- interop: the runtime must read SDK frames and vice versa ---

def test_sdk_frames_decode_in_runtime():
    runtime = pytest.importorskip("planforge.columnar")
    payload = encode_table(pf.Table(SCHEMA, DATA))
    region = runtime.BufferRegion(payload)
    table = runtime.decode_frames(region)
    assert table.rows == 3
    assert table.to_pydict()["country"] == ["IT", "FR", None]
    assert table.to_pydict()["when"][0] == datetime.date(2023, 1, 15)


def test_runtime_frames_decode_in_sdk():
    runtime = pytest.importorskip("planforge.columnar")
    schema = runtime.Schema([runtime.Field(n, d, nul) for n, d, nul in SCHEMA])
    table = runtime.table_from_pydict(schema, DATA)
    payload = runtime.encode_table_frames(table)
    back = decode_table(payload)
    assert back.to_pydict() == pf.Table(SCHEMA, DATA).to_pydict()
