"""Client SDK: submit a task graph, wait for its outputs, get the makespan.

The makespan clock is the client's own monotonic clock: it starts right
before the submission bytes are written and stops when the last
subscribed output arrives back, so no cross-host clock sync is needed.
``AsyncClient`` is the real implementation; ``Client`` is a blocking
facade over it running a private event loop thread, for CLIs and the
benchmark harness. One session drives one in-flight submission at a time.
"""

from __future__ import annotations

import asyncio
import threading
import time
from dataclasses import dataclass

from .model import TaskGraph, validate_graph
from .net import open_stream
from .protocol import ConnectionLost, Message, Op, ProtocolError, read_message, write_message
from .server import graph_to_header_rows

DEFAULT_TIMEOUT = 300.0


class TaskErred(Exception):
    """A task upstream of a requested output failed."""

    def __init__(self, task: int, error: str):
        super().__init__(f"task {task} failed: {error}")
        self.task = task
        self.error = error


class GraphRejected(Exception):
    """The server refused the submission."""

    def __init__(self, kind: str, error: str):
        super().__init__(f"{kind}: {error}")
        self.kind = kind


class GatherTimeout(Exception):
    pass


@dataclass(frozen=True, slots=True)
class SubmissionHandle:
    graph_id: int
    submitted_ns: int
    acked_ns: int
    outputs: tuple[int, ...]
    task_count: int


class AsyncClient:
    def __init__(self):
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self.client_id: int | None = None

    async def connect(self, addr: str) -> None:
        self._reader, self._writer = await open_stream(addr)
        await write_message(self._writer, Message.make(Op.REGISTER_CLIENT))
        reply = await read_message(self._reader)
        if reply.op != Op.REGISTER_CLIENT:
            raise ProtocolError(f"unexpected registration reply {reply.op}")
        self.client_id = reply.header["client_id"]

    async def submit(self, graph: TaskGraph) -> SubmissionHandle:
        """Validate locally, send the graph, and time-stamp the submission."""
        assert self._writer is not None, "not connected"
        validate_graph(graph)
        msg = Message.make(
            Op.SUBMIT_GRAPH,
            tasks=graph_to_header_rows(graph),
            outputs=list(graph.outputs),
        )
        submitted_ns = time.monotonic_ns()
        await write_message(self._writer, msg)
        reply = await read_message(self._reader)
        acked_ns = time.monotonic_ns()
        if reply.op != Op.SUBMIT_GRAPH:
            raise ProtocolError(f"unexpected submission reply {reply.op}")
        if not reply.header.get("ok"):
            raise GraphRejected(
                reply.header.get("error_kind", "GraphError"),
                reply.header.get("error", "rejected"),
            )
        return SubmissionHandle(
            graph_id=reply.header["graph"],
            submitted_ns=submitted_ns,
            acked_ns=acked_ns,
            outputs=graph.outputs,
            task_count=reply.header["task_count"],
        )

    async def gather(
        self, handle: SubmissionHandle, timeout: float = DEFAULT_TIMEOUT
    ) -> tuple[dict[int, bytes], float]:
        """Wait for every subscribed output; returns them plus the makespan
        in seconds. Raises TaskErred if any output became unreachable."""
        wanted = set(handle.outputs)
        if not wanted:
            return {}, (handle.acked_ns - handle.submitted_ns) / 1e9
        deadline = time.monotonic() + timeout
        collected: dict[int, bytes] = {}
        last_ns = handle.acked_ns
        while len(collected) < len(wanted):
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise GatherTimeout(f"{len(collected)}/{len(wanted)} outputs after {timeout}s")
            try:
                msg = await asyncio.wait_for(read_message(self._reader), budget)
            except asyncio.TimeoutError:
                raise GatherTimeout(
                    f"{len(collected)}/{len(wanted)} outputs after {timeout}s"
                ) from None
            if msg.op == Op.RESULT_REPLY:
                if msg.header["graph"] != handle.graph_id:
                    continue
                task = msg.header["task"]
                if task in wanted and msg.header.get("found"):
                    collected[task] = msg.blob(msg.header["data"])
                    last_ns = time.monotonic_ns()
            elif msg.op == Op.TASK_ERRED:
                raise TaskErred(msg.header["task"], msg.header.get("error", ""))
            # anything else on the stream is ignorable chatter
        return collected, (last_ns - handle.submitted_ns) / 1e9

    async def ping(self) -> None:
        await write_message(self._writer, Message.make(Op.HEARTBEAT))
        reply = await read_message(self._reader)
        if reply.op != Op.HEARTBEAT:
            raise ProtocolError(f"unexpected ping reply {reply.op}")

    async def shutdown_server(self) -> None:
        try:
            await write_message(self._writer, Message.make(Op.SHUTDOWN))
        except ConnectionLost:
            pass

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None


class Client:
    """Blocking wrapper around AsyncClient with a private loop thread."""

    def __init__(self, addr: str, connect_timeout: float = 30.0):
        self._loop = asyncio.new_event_loop()
        self._thread = threading.Thread(
            target=self._loop.run_forever, name="taskmesh-client", daemon=True
        )
        self._thread.start()
        self._async = AsyncClient()
        self._call(self._async.connect(addr), timeout=connect_timeout)

    def _call(self, coro, timeout: float | None = None):
        future = asyncio.run_coroutine_threadsafe(coro, self._loop)
        return future.result(timeout)

    def submit(self, graph: TaskGraph) -> SubmissionHandle:
        return self._call(self._async.submit(graph))

    def gather(
        self, handle: SubmissionHandle, timeout: float = DEFAULT_TIMEOUT
    ) -> tuple[dict[int, bytes], float]:
        # The outer wait gets slack so the protocol-level timeout fires first.
        return self._call(self._async.gather(handle, timeout), timeout=timeout + 30)

    def ping(self) -> None:
        self._call(self._async.ping())

    def shutdown_server(self) -> None:
        self._call(self._async.shutdown_server())

    def close(self) -> None:
        try:
            self._call(self._async.close())
        finally:
            self._loop.call_soon_threadsafe(self._loop.stop)
            self._thread.join(timeout=5)

    def __enter__(self) -> Client:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
