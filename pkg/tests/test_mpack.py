"""Codec-level tests for the MessagePack subset."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmesh import mpack


# Byte-exact vectors derived by hand from the format definition.
VECTORS = [
    (None, bytes([0xC0])),
    (False, bytes([0xC2])),
    (True, bytes([0xC3])),
    (0, bytes([0x00])),
    (127, bytes([0x7F])),
    (-1, bytes([0xFF])),
    (-32, bytes([0xE0])),
    (128, bytes([0xCC, 0x80])),
    (256, bytes([0xCD, 0x01, 0x00])),
    (65536, bytes([0xCE, 0x00, 0x01, 0x00, 0x00])),
    (2**32, bytes([0xCF, 0, 0, 0, 1, 0, 0, 0, 0])),
    (2**64 - 1, bytes([0xCF]) + b"\xff" * 8),
    (-33, bytes([0xD0, 0xDF])),
    (-129, bytes([0xD1, 0xFF, 0x7F])),
    (-(2**31), bytes([0xD2, 0x80, 0, 0, 0])),
    (-(2**63), bytes([0xD3, 0x80, 0, 0, 0, 0, 0, 0, 0])),
    (1.5, bytes([0xCB, 0x3F, 0xF8, 0, 0, 0, 0, 0, 0])),
    ("", bytes([0xA0])),
    ("abc", bytes([0xA3]) + b"abc"),
    ("x" * 31, bytes([0xBF]) + b"x" * 31),
    ("x" * 32, bytes([0xD9, 32]) + b"x" * 32),
    (b"", bytes([0xC4, 0])),
    (b"\x00\xff", bytes([0xC4, 2, 0x00, 0xFF])),
    ([], bytes([0x90])),
    ([1, 2], bytes([0x92, 1, 2])),
    ({}, bytes([0x80])),
    ({"compact": True, "schema": 0}, bytes([0x82, 0xA7]) + b"compact" + bytes([0xC3, 0xA6]) + b"schema" + bytes([0x00])),
]


@pytest.mark.parametrize("value,encoded", VECTORS)
def test_known_vectors(value, encoded):
    assert mpack.packb(value) == encoded
    assert mpack.unpackb(encoded) == value


def test_map_keys_sorted():
    a = mpack.packb({"b": 1, "a": 2})
    b = mpack.packb({"a": 2, "b": 1})
    assert a == b
    assert a == bytes([0x82, 0xA1]) + b"a" + bytes([0x02, 0xA1]) + b"b" + bytes([0x01])


def test_rejects_out_of_range_ints():
    with pytest.raises(mpack.MpackError):
        mpack.packb(2**64)
    with pytest.raises(mpack.MpackError):
        mpack.packb(-(2**63) - 1)


def test_rejects_non_string_keys():
    with pytest.raises(mpack.MpackError):
        mpack.packb({1: "x"})


def test_rejects_unknown_types():
    with pytest.raises(mpack.MpackError):
        mpack.packb(object())


def test_decode_truncated():
    full = mpack.packb({"key": [1, 2, 3]})
    for cut in range(1, len(full)):
        with pytest.raises(mpack.MpackError):
            mpack.unpackb(full[:cut])


def test_decode_trailing():
    with pytest.raises(mpack.MpackError):
        mpack.unpackb(mpack.packb(1) + b"\x00")


def test_decode_duplicate_keys():
    raw = bytes([0x82, 0xA1]) + b"a" + bytes([0x01, 0xA1]) + b"a" + bytes([0x02])
    with pytest.raises(mpack.MpackError):
        mpack.unpackb(raw)


def test_decode_foreign_widths():
    # Oversized encodings other encoders may emit still decode.
    assert mpack.unpackb(bytes([0xCC, 0x05])) == 5
    assert mpack.unpackb(bytes([0xCD, 0x00, 0x05])) == 5
    assert mpack.unpackb(bytes([0xD9, 1]) + b"a") == "a"
    f32 = mpack.unpackb(bytes([0xCA, 0x3F, 0xC0, 0, 0]))
    assert math.isclose(f32, 1.5)


def test_ext_types_rejected():
    with pytest.raises(mpack.MpackError):
        mpack.unpackb(bytes([0xD4, 0x01, 0x00]))


_scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(2**63), max_value=2**64 - 1),
    st.floats(allow_nan=False),
    st.text(max_size=40),
    st.binary(max_size=40),
)

_values = st.recursive(
    _scalars,
    lambda children: st.one_of(
        st.lists(children, max_size=6),
        st.dictionaries(st.text(max_size=12), children, max_size=6),
    ),
    max_leaves=30,
)


@settings(max_examples=300, deadline=None)
@given(_values)
def test_round_trip(value):
    encoded = mpack.packb(value)
    decoded = mpack.unpackb(encoded)
    assert decoded == _normalize(value)


def _normalize(value):
    # Tuples and lists share one wire shape; decode yields lists.
    if isinstance(value, tuple):
        return [_normalize(v) for v in value]
    if isinstance(value, list):
        return [_normalize(v) for v in value]
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items()}
    if isinstance(value, (bytearray, memoryview)):
        return bytes(value)
    return value
