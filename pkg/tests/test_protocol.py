"""Wire protocol framing, round-trip, and stream behavior."""

import asyncio
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmesh import mpack
from taskmesh.protocol import (
    BlobPlaceholder,
    ConnectionLost,
    EncodeError,
    MalformedHeader,
    Message,
    Op,
    TruncatedFrame,
    UnknownOp,
    decode,
    encode,
    read_message,
    write_message,
)


def test_minimal_heartbeat_round_trip():
    msg = Message.make(Op.HEARTBEAT)
    raw = encode(msg)
    (count,) = struct.unpack_from("<I", raw, 0)
    assert count == 1
    assert decode(raw) == msg


def test_framing_with_one_blob():
    msg = Message.make(
        Op.TASK_FINISHED, graph=1, task=2, out_bytes=8, data=BlobPlaceholder(0),
        blobs=(b"\x01" * 8,),
    )
    raw = encode(msg)
    (count,) = struct.unpack_from("<I", raw, 0)
    assert count == 2
    (header_len,) = struct.unpack_from("<I", raw, 4)
    (blob_len,) = struct.unpack_from("<I", raw, 8 + header_len)
    assert blob_len == 8
    assert decode(raw) == msg


def test_size_accounting_exact():
    msg = Message.make(Op.DATA_REPLY, graph=1, task=9, found=True,
                       data=BlobPlaceholder(0), blobs=(b"abcdef",))
    raw = encode(msg)
    header_frame = mpack.packb(
        {"op": "DATA_REPLY", "graph": 1, "task": 9, "found": True, "data": {"$blob": 0}}
    )
    frames = [header_frame, b"abcdef"]
    assert len(raw) == 4 + sum(4 + len(f) for f in frames)


def test_placeholder_out_of_range():
    msg = Message.make(Op.DATA_REPLY, graph=1, task=1, data=BlobPlaceholder(1), blobs=(b"x",))
    with pytest.raises(EncodeError):
        encode(msg)


def test_unreferenced_blob_rejected():
    msg = Message.make(Op.DATA_REPLY, graph=1, task=1, blobs=(b"x",))
    with pytest.raises(EncodeError):
        encode(msg)


def test_blob_referenced_twice_rejected():
    msg = Message.make(
        Op.DATA_REPLY, graph=1, task=1,
        a=BlobPlaceholder(0), b=BlobPlaceholder(0), blobs=(b"x",),
    )
    with pytest.raises(EncodeError):
        encode(msg)


def test_reserved_key_rejected():
    msg = Message(header={"op": "HEARTBEAT", "bad": {"$blob": 3}})
    with pytest.raises(EncodeError):
        encode(msg)


def test_missing_op_rejected():
    with pytest.raises(EncodeError):
        encode(Message(header={"x": 1}))


def test_decode_truncated_frames():
    raw = encode(Message.make(Op.HEARTBEAT, payload="hello"))
    for cut in (0, 3, 7, len(raw) - 1):
        with pytest.raises(TruncatedFrame):
            decode(raw[:cut])
    with pytest.raises(TruncatedFrame):
        decode(raw + b"\x00")


def test_decode_malformed_header():
    bad_header = b"\xc1"  # never-used type byte
    raw = struct.pack("<I", 1) + struct.pack("<I", len(bad_header)) + bad_header
    with pytest.raises(MalformedHeader):
        decode(raw)


def test_decode_header_not_map():
    frame = mpack.packb([1, 2, 3])
    raw = struct.pack("<I", 1) + struct.pack("<I", len(frame)) + frame
    with pytest.raises(MalformedHeader):
        decode(raw)


def test_unknown_op():
    frame = mpack.packb({"op": "NO_SUCH_OP"})
    raw = struct.pack("<I", 1) + struct.pack("<I", len(frame)) + frame
    with pytest.raises(UnknownOp):
        decode(raw)


def test_unknown_header_keys_ignored():
    frame = mpack.packb({"op": "HEARTBEAT", "future_extension": [1, 2]})
    raw = struct.pack("<I", 1) + struct.pack("<I", len(frame)) + frame
    msg = decode(raw)
    assert msg.header["future_extension"] == [1, 2]


def make_random_message(rng: random.Random) -> Message:
    """Random header tree with 0..16 blobs, placeholders sprinkled in."""
    blob_count = rng.randrange(17)
    blobs = tuple(rng.randbytes(rng.randrange(64)) for _ in range(blob_count))

    def scalar():
        roll = rng.random()
        if roll < 0.2:
            return rng.randrange(-(2**63), 2**64)
        if roll < 0.4:
            return rng.random() * 10**rng.randrange(-3, 6)
        if roll < 0.6:
            return "".join(rng.choice("abcdefghij") for _ in range(rng.randrange(8)))
        if roll < 0.7:
            return rng.randbytes(rng.randrange(12))
        if roll < 0.8:
            return rng.random() < 0.5
        return None

    containers = []

    def build(depth: int):
        if depth < 3 and rng.random() < 0.4:
            if rng.random() < 0.5:
                node = [build(depth + 1) for _ in range(rng.randrange(4))]
            else:
                node = {
                    f"k{rng.randrange(100)}": build(depth + 1)
                    for _ in range(rng.randrange(4))
                }
            containers.append(node)
            return node
        return scalar()

    header = {"op": rng.choice(list(Op)).value}
    for i in range(rng.randrange(5)):
        header[f"f{i}"] = build(0)
    containers.append(header)
    for index in range(blob_count):
        target = rng.choice(containers)
        if isinstance(target, dict):
            target[f"blob{index}"] = BlobPlaceholder(index)
        else:
            target.append(BlobPlaceholder(index))
    return Message(header=header, blobs=blobs)


def test_fuzzed_round_trip_sample():
    rng = random.Random(20260809)
    for _ in range(500):
        msg = make_random_message(rng)
        assert decode(encode(msg)) == msg


def test_injectivity_sample():
    rng = random.Random(7)
    seen: dict[bytes, Message] = {}
    for _ in range(300):
        msg = make_random_message(rng)
        raw = encode(msg)
        if raw in seen:
            assert seen[raw] == msg
        seen[raw] = msg
    # distinct structures, distinct bytes: spot-check a mutation
    base = Message.make(Op.HEARTBEAT, n=1)
    other = Message.make(Op.HEARTBEAT, n=2)
    assert encode(base) != encode(other)


_header_values = st.recursive(
    st.one_of(
        st.none(),
        st.booleans(),
        st.integers(min_value=-(2**63), max_value=2**64 - 1),
        st.floats(allow_nan=False),
        st.text(max_size=20).filter(lambda s: s != "$blob"),
        st.binary(max_size=20),
    ),
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(st.text(max_size=8).filter(lambda s: s != "$blob"), children, max_size=4),
    ),
    max_leaves=12,
)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=8).filter(lambda s: s != "$blob"),
                       _header_values, max_size=5))
def test_property_round_trip_headers(extra):
    header = {"op": Op.HEARTBEAT.value}
    header.update(extra)
    msg = Message(header=header)
    assert decode(encode(msg)) == msg


def test_stream_read_write_partial_delivery():
    async def scenario():
        reader = asyncio.StreamReader()
        msg = Message.make(Op.ASSIGN_TASK, graph=1, task=7, payload="x" * 500)
        raw = encode(msg)
        # deliver in dribbles
        async def feeder():
            for i in range(0, len(raw), 13):
                reader.feed_data(raw[i : i + 13])
                await asyncio.sleep(0)
        feed = asyncio.create_task(feeder())
        got = await read_message(reader)
        await feed
        assert got == msg

    asyncio.run(scenario())


def test_stream_clean_eof():
    async def scenario():
        reader = asyncio.StreamReader()
        reader.feed_eof()
        with pytest.raises(ConnectionLost) as info:
            await read_message(reader)
        assert info.value.clean

    asyncio.run(scenario())


def test_stream_dirty_eof():
    async def scenario():
        reader = asyncio.StreamReader()
        raw = encode(Message.make(Op.HEARTBEAT))
        reader.feed_data(raw[: len(raw) // 2])
        reader.feed_eof()
        with pytest.raises(ConnectionLost) as info:
            await read_message(reader)
        assert not info.value.clean

    asyncio.run(scenario())


def test_write_then_read_over_socketpair():
    async def scenario():
        server_side = None
        done = asyncio.Event()

        async def handler(reader, writer):
            msg = await read_message(reader)
            await write_message(writer, msg)
            await done.wait()
            writer.close()

        server = await asyncio.start_server(handler, "127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        msg = Message.make(
            Op.RESULT_REPLY, graph=3, task=4, found=True,
            data=BlobPlaceholder(0), blobs=(b"payload-bytes",),
        )
        await write_message(writer, msg)
        echoed = await read_message(reader)
        assert echoed == msg
        done.set()
        writer.close()
        server.close()
        await server.wait_closed()

    asyncio.run(scenario())
