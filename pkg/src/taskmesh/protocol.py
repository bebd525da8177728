"""Framed wire protocol shared by all links in the cluster.

A message is a self-describing header map plus zero or more raw binary
blobs. Large byte values never live inside the header; the header holds a
placeholder that names the blob frame carrying them, which keeps the
header structure stable no matter how payloads are fragmented. On the
wire a message is:

    u32le frame_count            (1 + number of blobs)
    frame_count frames, each:  u32le length + payload

Frame 0 is the header in MessagePack; frames 1..n are the blobs in order.
A placeholder is encoded as the one-key map ``{"$blob": index}`` with the
index counting into the blob list. ``$blob`` is therefore a reserved map
key. See protocol.md for the per-op header schemas.
"""

from __future__ import annotations

import asyncio
import enum
import struct
from dataclasses import dataclass, field

from . import mpack

BLOB_KEY = "$blob"
MAX_FRAMES = 1 << 24


class ProtocolError(Exception):
    """Base for all wire protocol faults."""


class EncodeError(ProtocolError):
    """Message violates its invariants and cannot be put on the wire."""


class TruncatedFrame(ProtocolError):
    """The byte sequence does not contain exactly the declared frames."""


class MalformedHeader(ProtocolError):
    """Frame 0 is not a valid header map."""


class UnknownOp(ProtocolError):
    """The header names an op outside the protocol; close the connection."""


class ConnectionLost(ProtocolError):
    """The peer went away mid-stream."""

    def __init__(self, message: str = "connection lost", clean: bool = False):
        super().__init__(message)
        self.clean = clean


class Op(str, enum.Enum):
    REGISTER_WORKER = "REGISTER_WORKER"
    REGISTER_CLIENT = "REGISTER_CLIENT"
    SUBMIT_GRAPH = "SUBMIT_GRAPH"
    ASSIGN_TASK = "ASSIGN_TASK"
    TASK_FINISHED = "TASK_FINISHED"
    TASK_ERRED = "TASK_ERRED"
    STEAL_REQUEST = "STEAL_REQUEST"
    STEAL_RESPONSE = "STEAL_RESPONSE"
    FETCH_DATA = "FETCH_DATA"
    DATA_REPLY = "DATA_REPLY"
    DATA_PLACED = "DATA_PLACED"
    RELEASE_DATA = "RELEASE_DATA"
    FETCH_RESULT = "FETCH_RESULT"
    RESULT_REPLY = "RESULT_REPLY"
    HEARTBEAT = "HEARTBEAT"
    SHUTDOWN = "SHUTDOWN"


_OP_VALUES = frozenset(op.value for op in Op)


@dataclass(frozen=True, slots=True)
class BlobPlaceholder:
    """Stand-in inside a header for blob frame ``index``."""

    index: int


@dataclass(slots=True)
class Message:
    """A decoded protocol message: header map plus ordered blobs."""

    header: dict
    blobs: tuple[bytes, ...] = ()

    def __post_init__(self):
        self.blobs = tuple(self.blobs)

    @classmethod
    def make(cls, op: Op, blobs: tuple[bytes, ...] = (), **fields) -> Message:
        header = {"op": op.value}
        header.update(fields)
        return cls(header=header, blobs=blobs)

    @property
    def op(self) -> str:
        return self.header["op"]

    def blob(self, placeholder: BlobPlaceholder) -> bytes:
        """Consumer-side substitution of a placeholder for its bytes."""
        return self.blobs[placeholder.index]


def _collect_refs(value, refs: list[int]) -> None:
    if isinstance(value, BlobPlaceholder):
        refs.append(value.index)
    elif isinstance(value, dict):
        if set(value.keys()) == {BLOB_KEY}:
            raise EncodeError(f"{BLOB_KEY!r} is a reserved header key")
        for item in value.values():
            _collect_refs(item, refs)
    elif isinstance(value, (list, tuple)):
        for item in value:
            _collect_refs(item, refs)


def _lower(value):
    """Replace BlobPlaceholder objects with their wire map form."""
    if isinstance(value, BlobPlaceholder):
        return {BLOB_KEY: value.index}
    if isinstance(value, dict):
        return {key: _lower(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_lower(item) for item in value]
    return value


def _revive(value):
    """Inverse of _lower: restore placeholders after MessagePack decode."""
    if isinstance(value, dict):
        if set(value.keys()) == {BLOB_KEY} and isinstance(value[BLOB_KEY], int):
            return BlobPlaceholder(value[BLOB_KEY])
        return {key: _revive(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_revive(item) for item in value]
    return value


def _check_refs(header: dict, blob_count: int, exc_type: type[ProtocolError]) -> None:
    refs: list[int] = []
    _collect_refs(header, refs)
    if sorted(refs) != list(range(blob_count)):
        raise exc_type(
            f"placeholders reference blobs {sorted(refs)}, message carries {blob_count}"
        )


def encode(message: Message) -> bytes:
    """Serialize a message to its framed byte sequence."""
    if not isinstance(message.header, dict):
        raise EncodeError("header must be a map")
    if "op" not in message.header:
        raise EncodeError("header is missing 'op'")
    _check_refs(message.header, len(message.blobs), EncodeError)
    try:
        header_frame = mpack.packb(_lower(message.header))
    except mpack.MpackError as exc:
        raise EncodeError(str(exc)) from exc
    frames = [header_frame, *message.blobs]
    parts = [struct.pack("<I", len(frames))]
    for frame in frames:
        parts.append(struct.pack("<I", len(frame)))
        parts.append(frame)
    return b"".join(parts)


def decode(data: bytes) -> Message:
    """Inverse of encode. Placeholders stay in the header untouched."""
    if len(data) < 4:
        raise TruncatedFrame("missing frame count")
    (count,) = struct.unpack_from("<I", data, 0)
    if count == 0 or count > MAX_FRAMES:
        raise MalformedHeader(f"implausible frame count {count}")
    offset = 4
    frames: list[bytes] = []
    for _ in range(count):
        if offset + 4 > len(data):
            raise TruncatedFrame("missing frame length")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise TruncatedFrame("frame payload cut short")
        frames.append(data[offset : offset + length])
        offset += length
    if offset != len(data):
        raise TruncatedFrame("trailing bytes after final frame")
    return _from_frames(frames)


def _from_frames(frames: list[bytes]) -> Message:
    try:
        raw_header = mpack.unpackb(frames[0])
    except mpack.MpackError as exc:
        raise MalformedHeader(str(exc)) from exc
    if not isinstance(raw_header, dict):
        raise MalformedHeader("header frame is not a map")
    header = _revive(raw_header)
    blobs = tuple(frames[1:])
    _check_refs(header, len(blobs), MalformedHeader)
    op = header.get("op")
    if not isinstance(op, str):
        raise MalformedHeader("header is missing 'op'")
    if op not in _OP_VALUES:
        raise UnknownOp(op)
    return Message(header=header, blobs=blobs)


async def read_message(reader: asyncio.StreamReader) -> Message:
    """Read exactly one framed message; resumes across partial delivery."""
    started = False
    try:
        head = await reader.readexactly(4)
        started = True
        (count,) = struct.unpack("<I", head)
        if count == 0 or count > MAX_FRAMES:
            raise MalformedHeader(f"implausible frame count {count}")
        frames: list[bytes] = []
        for _ in range(count):
            (length,) = struct.unpack("<I", await reader.readexactly(4))
            frames.append(await reader.readexactly(length))
    except asyncio.IncompleteReadError as exc:
        # EOF exactly on a message boundary is a clean close.
        raise ConnectionLost(clean=not started and not exc.partial) from exc
    except (ConnectionResetError, BrokenPipeError, OSError) as exc:
        raise ConnectionLost(str(exc)) from exc
    return _from_frames(frames)


async def write_message(writer: asyncio.StreamWriter, message: Message) -> None:
    """Write one framed message; the write is a single buffer append so
    messages from one event loop never interleave on the stream."""
    try:
        writer.write(encode(message))
        await writer.drain()
    except (ConnectionResetError, BrokenPipeError, OSError) as exc:
        raise ConnectionLost(str(exc)) from exc
