"""Stream transport helpers.

Addresses are strings: ``host:port`` for TCP (the reference transport) or
``unix:<path>`` for a local unix socket. Both carry the same framed
protocol; unix sockets matter for single-process test clusters, where
this sandbox's loopback TCP can drop bytes under burst load.
"""

from __future__ import annotations

import asyncio
import socket

UNIX_PREFIX = "unix:"


def is_unix(addr: str) -> bool:
    return addr.startswith(UNIX_PREFIX)


def split_tcp(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host:
        raise ValueError(f"expected host:port, got {addr!r}")
    return host, int(port)


async def open_stream(addr: str) -> tuple[asyncio.StreamReader, asyncio.StreamWriter]:
    if is_unix(addr):
        reader, writer = await asyncio.open_unix_connection(addr[len(UNIX_PREFIX):])
    else:
        host, port = split_tcp(addr)
        reader, writer = await asyncio.open_connection(host, port)
        set_nodelay(writer)
    return reader, writer


async def start_stream_server(callback, addr: str) -> asyncio.Server:
    if is_unix(addr):
        return await asyncio.start_unix_server(callback, addr[len(UNIX_PREFIX):])
    host, port = split_tcp(addr)
    return await asyncio.start_server(callback, host, port)


def bound_address(server: asyncio.Server, requested: str) -> str:
    """The concrete address after bind (resolves TCP port 0)."""
    if is_unix(requested):
        return requested
    name = server.sockets[0].getsockname()
    return f"{name[0]}:{name[1]}"


def set_nodelay(writer: asyncio.StreamWriter) -> None:
    sock = writer.get_extra_info("socket")
    if sock is not None and sock.family in (socket.AF_INET, socket.AF_INET6):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
