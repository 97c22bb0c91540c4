"""CBUF frame codec: layout, round trips, zero-copy accounting."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings

from planforge.columnar import (
    BufferRegion,
    Field,
    RegionRegistry,
    Schema,
    batch_from_pydict,
    batches_equal,
    decode_batch,
    encode_batch,
)
from planforge.errors import ChecksumMismatch, MalformedFrame

from .util import batches


def _decode(frame):
    return decode_batch(BufferRegion(frame))


def test_empty_batch_round_trip():
    schema = Schema([Field("a", "int64", False), Field("b", "float64", True)])
    batch = batch_from_pydict(schema, {"a": [], "b": []})
    frame = encode_batch(batch)
    header_len = struct.unpack("<I", frame[4:8])[0]
    header = json.loads(frame[8:8 + header_len])
    assert header["rows"] == 0
    for col in header["columns"]:
        for _, buf_len in col:
            assert buf_len == 0
    assert batches_equal(batch, _decode(frame))


def test_int_column_round_trip():
    schema = Schema([Field("id", "int64", False)])
    batch = batch_from_pydict(schema, {"id": [1, 2, 3]})
    assert batches_equal(batch, _decode(encode_batch(batch)))


def test_utf8_layout_hand_walked():
    # oracle walked by hand from the layout rules:
    # validity bitmap LSB-first 0b101, offsets [0,2,2,4], data "ITFR"
    schema = Schema([Field("tag", "utf8", True)])
    batch = batch_from_pydict(schema, {"tag": ["IT", None, "FR"]})
    frame = encode_batch(batch)
    header_len = struct.unpack("<I", frame[4:8])[0]
    header = json.loads(frame[8:8 + header_len])
    section = (8 + header_len + 7) & ~7
    (v_off, v_len), (o_off, o_len), (d_off, d_len) = header["columns"][0]
    assert frame[section + v_off:section + v_off + v_len] == bytes([0b101])
    offsets = np.frombuffer(frame, dtype="<i4", count=4, offset=section + o_off)
    assert offsets.tolist() == [0, 2, 2, 4]
    assert frame[section + d_off:section + d_off + d_len] == b"ITFR"


@settings(max_examples=150, deadline=None)
@given(batches())
def test_round_trip_property(batch):
    assert batches_equal(batch, _decode(encode_batch(batch)))


def test_round_trip_nan_and_inf():
    schema = Schema([Field("x", "float64", True)])
    batch = batch_from_pydict(schema, {"x": [float("nan"), None, float("inf")]})
    assert batches_equal(batch, _decode(encode_batch(batch)))


def test_encode_deterministic_under_null_payloads():
    schema = Schema([Field("x", "int64", True), Field("s", "utf8", True)])
    a = batch_from_pydict(schema, {"x": [7, None], "s": [None, "hi"]})
    b = batch_from_pydict(schema, {"x": [7, None], "s": [None, "hi"]})
    assert encode_batch(a) == encode_batch(b)
    assert encode_batch(a) == encode_batch(a)


def test_decode_is_zero_copy_view():
    schema = Schema([Field("x", "int64", False)])
    batch = batch_from_pydict(schema, {"x": list(range(100))})
    region = BufferRegion(encode_batch(batch))
    view = decode_batch(region)
    raw = np.frombuffer(region.buf, dtype=np.uint8)
    assert np.shares_memory(view.columns[0].values, raw)


def test_two_views_one_region_accounted_once():
    registry = RegionRegistry()
    schema = Schema([Field("x", "int64", False)])
    batch = batch_from_pydict(schema, {"x": list(range(1000))})
    frame = encode_batch(batch)
    region = BufferRegion(frame, registry)
    v1 = decode_batch(region)
    v2 = decode_batch(region)
    assert batches_equal(v1, v2)
    assert region.refcount == 3  # owner + two views
    assert registry.total_resident_bytes() == len(frame)


def test_views_cannot_outlive_region():
    registry = RegionRegistry()
    schema = Schema([Field("x", "int64", False)])
    region = BufferRegion(encode_batch(batch_from_pydict(schema, {"x": [1]})),
                          registry)
    view = decode_batch(region)
    region.release()  # drop the owner ref; the view still holds one
    assert not region.closed
    region.release()
    assert region.closed
    assert registry.total_resident_bytes() == 0
    with pytest.raises(ValueError):
        region.retain()


def test_truncated_frame_raises():
    schema = Schema([Field("x", "int64", False)])
    frame = encode_batch(batch_from_pydict(schema, {"x": [1, 2]}))
    with pytest.raises(MalformedFrame):
        _decode(frame[:-8])


def test_bad_magic_raises():
    schema = Schema([Field("x", "int64", False)])
    frame = bytearray(encode_batch(batch_from_pydict(schema, {"x": [1]})))
    frame[:4] = b"XXXX"
    with pytest.raises(MalformedFrame):
        _decode(bytes(frame))


def test_length_check_mismatch_raises():
    schema = Schema([Field("x", "int64", False)])
    frame = bytearray(encode_batch(batch_from_pydict(schema, {"x": [1]})))
    frame[-8:] = struct.pack("<Q", len(frame) + 8)
    with pytest.raises(ChecksumMismatch):
        _decode(bytes(frame))
