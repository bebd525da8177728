"""Minimal MessagePack codec for protocol message headers.

Covers the value domain headers may carry: nil, bool, integers up to 64
bits, float64, str, bin, array, and map with string keys. Encoding is
canonical (smallest representation, map keys in sorted byte order) so
that structurally distinct values encode to distinct byte sequences.
Decoding accepts any conforming stream, including float32 and oversized
integer encodings produced by other encoders.
"""

from __future__ import annotations

import struct

_MAX_DEPTH = 100


class MpackError(ValueError):
    """Unencodable value or malformed input."""


def packb(value) -> bytes:
    buf = bytearray()
    _pack(value, buf, 0)
    return bytes(buf)


def _pack(value, buf: bytearray, depth: int) -> None:
    if depth > _MAX_DEPTH:
        raise MpackError("nesting too deep")
    if value is None:
        buf.append(0xC0)
    elif value is True:
        buf.append(0xC3)
    elif value is False:
        buf.append(0xC2)
    elif isinstance(value, int):
        _pack_int(value, buf)
    elif isinstance(value, float):
        buf.append(0xCB)
        buf += struct.pack(">d", value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        n = len(raw)
        if n < 32:
            buf.append(0xA0 | n)
        elif n < 2**8:
            buf += bytes((0xD9, n))
        elif n < 2**16:
            buf.append(0xDA)
            buf += struct.pack(">H", n)
        elif n < 2**32:
            buf.append(0xDB)
            buf += struct.pack(">I", n)
        else:
            raise MpackError("string too long")
        buf += raw
    elif isinstance(value, (bytes, bytearray, memoryview)):
        raw = bytes(value)
        n = len(raw)
        if n < 2**8:
            buf += bytes((0xC4, n))
        elif n < 2**16:
            buf.append(0xC5)
            buf += struct.pack(">H", n)
        elif n < 2**32:
            buf.append(0xC6)
            buf += struct.pack(">I", n)
        else:
            raise MpackError("binary too long")
        buf += raw
    elif isinstance(value, (list, tuple)):
        n = len(value)
        if n < 16:
            buf.append(0x90 | n)
        elif n < 2**16:
            buf.append(0xDC)
            buf += struct.pack(">H", n)
        elif n < 2**32:
            buf.append(0xDD)
            buf += struct.pack(">I", n)
        else:
            raise MpackError("array too long")
        for item in value:
            _pack(item, buf, depth + 1)
    elif isinstance(value, dict):
        n = len(value)
        if n < 16:
            buf.append(0x80 | n)
        elif n < 2**16:
            buf.append(0xDE)
            buf += struct.pack(">H", n)
        elif n < 2**32:
            buf.append(0xDF)
            buf += struct.pack(">I", n)
        else:
            raise MpackError("map too long")
        for key in sorted(value):
            if not isinstance(key, str):
                raise MpackError(f"map key must be str, got {type(key).__name__}")
            _pack(key, buf, depth + 1)
            _pack(value[key], buf, depth + 1)
    else:
        raise MpackError(f"cannot encode {type(value).__name__}")


def _pack_int(value: int, buf: bytearray) -> None:
    if 0 <= value <= 0x7F:
        buf.append(value)
    elif -32 <= value < 0:
        buf.append(0x100 + value)
    elif value > 0:
        if value < 2**8:
            buf += bytes((0xCC, value))
        elif value < 2**16:
            buf.append(0xCD)
            buf += struct.pack(">H", value)
        elif value < 2**32:
            buf.append(0xCE)
            buf += struct.pack(">I", value)
        elif value < 2**64:
            buf.append(0xCF)
            buf += struct.pack(">Q", value)
        else:
            raise MpackError("integer out of 64-bit range")
    else:
        if value >= -(2**7):
            buf.append(0xD0)
            buf += struct.pack(">b", value)
        elif value >= -(2**15):
            buf.append(0xD1)
            buf += struct.pack(">h", value)
        elif value >= -(2**31):
            buf.append(0xD2)
            buf += struct.pack(">i", value)
        elif value >= -(2**63):
            buf.append(0xD3)
            buf += struct.pack(">q", value)
        else:
            raise MpackError("integer out of 64-bit range")


def unpackb(data: bytes):
    value, offset = _unpack(data, 0, 0)
    if offset != len(data):
        raise MpackError("trailing bytes after value")
    return value


def _need(data: bytes, offset: int, count: int) -> None:
    if offset + count > len(data):
        raise MpackError("truncated input")


def _unpack(data: bytes, offset: int, depth: int):
    if depth > _MAX_DEPTH:
        raise MpackError("nesting too deep")
    _need(data, offset, 1)
    b = data[offset]
    offset += 1
    if b <= 0x7F:
        return b, offset
    if b >= 0xE0:
        return b - 0x100, offset
    if 0x80 <= b <= 0x8F:
        return _unpack_map(data, offset, b & 0x0F, depth)
    if 0x90 <= b <= 0x9F:
        return _unpack_array(data, offset, b & 0x0F, depth)
    if 0xA0 <= b <= 0xBF:
        return _unpack_str(data, offset, b & 0x1F)
    if b == 0xC0:
        return None, offset
    if b == 0xC2:
        return False, offset
    if b == 0xC3:
        return True, offset
    if b == 0xC4:
        _need(data, offset, 1)
        return _unpack_bin(data, offset + 1, data[offset])
    if b == 0xC5:
        _need(data, offset, 2)
        (n,) = struct.unpack_from(">H", data, offset)
        return _unpack_bin(data, offset + 2, n)
    if b == 0xC6:
        _need(data, offset, 4)
        (n,) = struct.unpack_from(">I", data, offset)
        return _unpack_bin(data, offset + 4, n)
    if b == 0xCA:
        _need(data, offset, 4)
        (v,) = struct.unpack_from(">f", data, offset)
        return v, offset + 4
    if b == 0xCB:
        _need(data, offset, 8)
        (v,) = struct.unpack_from(">d", data, offset)
        return v, offset + 8
    if 0xCC <= b <= 0xCF:
        width = 1 << (b - 0xCC)
        _need(data, offset, width)
        return int.from_bytes(data[offset : offset + width], "big"), offset + width
    if 0xD0 <= b <= 0xD3:
        width = 1 << (b - 0xD0)
        _need(data, offset, width)
        v = int.from_bytes(data[offset : offset + width], "big", signed=True)
        return v, offset + width
    if b == 0xD9:
        _need(data, offset, 1)
        return _unpack_str(data, offset + 1, data[offset])
    if b == 0xDA:
        _need(data, offset, 2)
        (n,) = struct.unpack_from(">H", data, offset)
        return _unpack_str(data, offset + 2, n)
    if b == 0xDB:
        _need(data, offset, 4)
        (n,) = struct.unpack_from(">I", data, offset)
        return _unpack_str(data, offset + 4, n)
    if b == 0xDC:
        _need(data, offset, 2)
        (n,) = struct.unpack_from(">H", data, offset)
        return _unpack_array(data, offset + 2, n, depth)
    if b == 0xDD:
        _need(data, offset, 4)
        (n,) = struct.unpack_from(">I", data, offset)
        return _unpack_array(data, offset + 4, n, depth)
    if b == 0xDE:
        _need(data, offset, 2)
        (n,) = struct.unpack_from(">H", data, offset)
        return _unpack_map(data, offset + 2, n, depth)
    if b == 0xDF:
        _need(data, offset, 4)
        (n,) = struct.unpack_from(">I", data, offset)
        return _unpack_map(data, offset + 4, n, depth)
    raise MpackError(f"unsupported type byte 0x{b:02x}")


def _unpack_str(data: bytes, offset: int, n: int):
    _need(data, offset, n)
    try:
        return data[offset : offset + n].decode("utf-8"), offset + n
    except UnicodeDecodeError as exc:
        raise MpackError("invalid utf-8 in string") from exc


def _unpack_bin(data: bytes, offset: int, n: int):
    _need(data, offset, n)
    return data[offset : offset + n], offset + n


def _unpack_array(data: bytes, offset: int, n: int, depth: int):
    items = []
    for _ in range(n):
        value, offset = _unpack(data, offset, depth + 1)
        items.append(value)
    return items, offset


def _unpack_map(data: bytes, offset: int, n: int, depth: int):
    result = {}
    for _ in range(n):
        key, offset = _unpack(data, offset, depth + 1)
        if not isinstance(key, str):
            raise MpackError("map key must be str")
        if key in result:
            raise MpackError(f"duplicate map key {key!r}")
        value, offset = _unpack(data, offset, depth + 1)
        result[key] = value
    return result, offset
