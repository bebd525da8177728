"""Task execution process: runs payloads on a fixed number of slots.

A worker keeps one connection to the server, a listener for peer data
fetches, and a priority run queue. Missing inputs are fetched from the
peers named in the assignment before the task becomes runnable. In zero
mode the worker performs no computation at all: every assignment is
acknowledged as finished immediately and missing inputs are simulated by
telling the server they were placed locally, which isolates server-side
overhead from execution cost.
"""

from __future__ import annotations

import asyncio
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial

from .model import PayloadError, PayloadKind, PayloadSpec, execute_payload
from .net import bound_address, open_stream, set_nodelay, start_stream_server
from .protocol import (
    BlobPlaceholder,
    ConnectionLost,
    Message,
    Op,
    ProtocolError,
    read_message,
    write_message,
)
from .scheduler.base import TaskKey

log = logging.getLogger("taskmesh.worker")

ZERO_OBJECT = bytes(8)


class FetchError(Exception):
    """No listed peer could supply an input."""


@dataclass(slots=True)
class WorkerConfig:
    server: str = "127.0.0.1:7421"
    listen: str = "127.0.0.1:0"
    cores: int = 1
    node_id: str = "node0"
    zero: bool = False
    duration_scale: float = 1.0

    def __post_init__(self):
        if self.cores < 1:
            raise ValueError("cores must be >= 1")
        if self.duration_scale <= 0:
            raise ValueError("duration_scale must be > 0")


@dataclass(slots=True)
class _PendingTask:
    key: TaskKey
    spec: PayloadSpec
    priority: int
    inputs: tuple[TaskKey, ...]


class _PeerLink:
    """One cached connection to a peer; exchanges are serialized."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer
        self.lock = asyncio.Lock()

    async def request(self, message: Message) -> Message:
        async with self.lock:
            await write_message(self.writer, message)
            return await read_message(self.reader)

    def close(self) -> None:
        self.writer.close()


class Worker:
    def __init__(self, config: WorkerConfig):
        self.config = config
        self.worker_id: int | None = None
        self.store: dict[TaskKey, bytes] = {}
        self.presence: set[TaskKey] = set()
        self._queued: dict[TaskKey, _PendingTask] = {}
        self._heap: list[tuple[int, int, TaskKey]] = []
        self._seq = 0
        self.running = 0
        self._pool: ThreadPoolExecutor | None = None
        self._peer_server: asyncio.Server | None = None
        self._peer_links: dict[str, _PeerLink] = {}
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._loop_task: asyncio.Task | None = None
        self._aux_tasks: set[asyncio.Task] = set()
        self.closed = asyncio.Event()

    # -- lifecycle -------------------------------------------------------

    @property
    def listen_address(self) -> str:
        assert self._peer_server is not None
        return bound_address(self._peer_server, self.config.listen)

    async def start(self) -> None:
        cfg = self.config
        if not cfg.zero:
            self._pool = ThreadPoolExecutor(
                max_workers=cfg.cores, thread_name_prefix="taskmesh-slot"
            )
        self._peer_server = await start_stream_server(self._serve_peer, cfg.listen)
        self._reader, self._writer = await open_stream(cfg.server)
        await write_message(
            self._writer,
            Message.make(
                Op.REGISTER_WORKER,
                node_id=cfg.node_id,
                cores=cfg.cores,
                listen=self.listen_address,
            ),
        )
        reply = await read_message(self._reader)
        if reply.op != Op.REGISTER_WORKER:
            raise ProtocolError(f"unexpected registration reply {reply.op}")
        self.worker_id = reply.header["worker_id"]
        self._loop_task = asyncio.create_task(self._server_loop())
        log.info("worker %s registered (node=%s cores=%d zero=%s)",
                 self.worker_id, cfg.node_id, cfg.cores, cfg.zero)

    async def run(self) -> None:
        await self.closed.wait()

    async def stop(self) -> None:
        if self._loop_task is not None:
            self._loop_task.cancel()
        for task in list(self._aux_tasks):
            task.cancel()
        if self._writer is not None:
            self._writer.close()
        for link in self._peer_links.values():
            link.close()
        if self._peer_server is not None:
            self._peer_server.close()
            await self._peer_server.wait_closed()
        if self._pool is not None:
            self._pool.shutdown(wait=False, cancel_futures=True)
        self.closed.set()

    def _spawn(self, coro) -> None:
        task = asyncio.get_running_loop().create_task(coro)
        self._aux_tasks.add(task)
        task.add_done_callback(self._aux_tasks.discard)

    # -- server link -----------------------------------------------------

    async def _send(self, message: Message) -> None:
        assert self._writer is not None
        await write_message(self._writer, message)

    async def _server_loop(self) -> None:
        assert self._reader is not None
        try:
            while True:
                msg = await read_message(self._reader)
                op = msg.op
                if op == Op.ASSIGN_TASK:
                    self.on_assign(msg)
                elif op == Op.STEAL_REQUEST:
                    await self.on_steal_request(msg)
                elif op == Op.FETCH_RESULT:
                    await self._on_fetch_result(msg)
                elif op == Op.RELEASE_DATA:
                    self._on_release(msg)
                elif op == Op.HEARTBEAT:
                    pass
                elif op == Op.SHUTDOWN:
                    break
                else:
                    raise ProtocolError(f"unexpected op {op} from server")
        except ConnectionLost:
            log.info("server connection closed")
        except asyncio.CancelledError:
            raise
        except Exception:
            log.exception("worker loop failed")
        finally:
            self._spawn(self.stop())

    # -- assignment and execution ----------------------------------------

    def on_assign(self, msg: Message) -> None:
        header = msg.header
        key = (header["graph"], header["task"])
        spec = PayloadSpec(
            kind=PayloadKind(header["kind"]),
            duration_ms=header["dur_ms"],
            output_size=header["out_bytes"],
        )
        inputs = tuple((header["graph"], tid) for tid in header["inputs"])
        pending = _PendingTask(key, spec, header["priority"], inputs)
        if self.config.zero:
            self._spawn(self.zero_complete(pending))
            return
        locations = {
            (header["graph"], tid): addrs for tid, addrs in header["locations"]
        }
        self._spawn(self._prepare(pending, locations))

    async def _prepare(self, pending: _PendingTask, locations: dict[TaskKey, list[str]]) -> None:
        missing = [key for key in pending.inputs if key not in self.store]
        if missing:
            results = await asyncio.gather(
                *(self._fetch_input(key, locations.get(key, [])) for key in missing),
                return_exceptions=True,
            )
            failures = [r for r in results if isinstance(r, BaseException)]
            if failures:
                await self._erred(pending.key, str(failures[0]))
                return
        self._enqueue(pending)

    def _enqueue(self, pending: _PendingTask) -> None:
        self._seq += 1
        self._queued[pending.key] = pending
        # Highest priority first; FIFO within a priority.
        heapq.heappush(self._heap, (-pending.priority, self._seq, pending.key))
        self._kick()

    def _kick(self) -> None:
        while self.running < self.config.cores and self._heap:
            _, _, key = heapq.heappop(self._heap)
            pending = self._queued.pop(key, None)
            if pending is None:
                continue  # retracted while queued
            self.running += 1
            assert self.running <= self.config.cores, "slot bound exceeded"
            self._spawn(self._run_one(pending))

    async def _run_one(self, pending: _PendingTask) -> None:
        try:
            try:
                values = [self.store[key] for key in pending.inputs]
            except KeyError as exc:
                raise PayloadError(f"input {exc} missing from local store") from None
            assert self._pool is not None
            output = await asyncio.get_running_loop().run_in_executor(
                self._pool,
                partial(
                    execute_payload,
                    pending.spec,
                    values,
                    task_id=pending.key[1],
                    duration_scale=self.config.duration_scale,
                ),
            )
            self.store[pending.key] = output
            await self._send(
                Message.make(
                    Op.TASK_FINISHED,
                    graph=pending.key[0],
                    task=pending.key[1],
                    out_bytes=len(output),
                )
            )
        except PayloadError as exc:
            await self._erred(pending.key, str(exc))
        except ConnectionLost:
            pass
        finally:
            self.running -= 1
            self._kick()

    async def _erred(self, key: TaskKey, error: str) -> None:
        log.warning("task %s:%s failed: %s", key[0], key[1], error)
        try:
            await self._send(
                Message.make(Op.TASK_ERRED, graph=key[0], task=key[1], error=error)
            )
        except ConnectionLost:
            pass

    # -- stealing ----------------------------------------------------------

    async def on_steal_request(self, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        # Success only for tasks still queued; running, finished, unknown,
        # and everything in zero mode refuse.
        success = not self.config.zero and self._queued.pop(key, None) is not None
        await self._send(
            Message.make(Op.STEAL_RESPONSE, graph=key[0], task=key[1], success=success)
        )

    # -- zero mode ---------------------------------------------------------

    async def zero_complete(self, pending: _PendingTask) -> None:
        """Finish instantly: report missing inputs as placed, then done.

        No execution, no sleeps, no peer traffic; per task this costs one
        message plus one per previously unseen input.
        """
        for key in pending.inputs:
            if key not in self.presence:
                self.presence.add(key)
                await self._send(
                    Message.make(Op.DATA_PLACED, graph=key[0], task=key[1])
                )
        self.presence.add(pending.key)
        await self._send(
            Message.make(
                Op.TASK_FINISHED,
                graph=pending.key[0],
                task=pending.key[1],
                out_bytes=len(ZERO_OBJECT),
            )
        )

    # -- data plane ----------------------------------------------------------

    def _on_release(self, msg: Message) -> None:
        graph = msg.header["graph"]
        for tid in msg.header["tasks"]:
            self.store.pop((graph, tid), None)
            self.presence.discard((graph, tid))

    def _data_reply(self, op: Op, key: TaskKey) -> Message:
        if self.config.zero:
            return Message.make(
                op,
                graph=key[0],
                task=key[1],
                found=True,
                data=BlobPlaceholder(0),
                blobs=(ZERO_OBJECT,),
            )
        data = self.store.get(key)
        if data is None:
            return Message.make(op, graph=key[0], task=key[1], found=False)
        return Message.make(
            op,
            graph=key[0],
            task=key[1],
            found=True,
            data=BlobPlaceholder(0),
            blobs=(data,),
        )

    async def _on_fetch_result(self, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        await self._send(self._data_reply(Op.RESULT_REPLY, key))

    async def serve_fetch(self, msg: Message) -> Message:
        key = (msg.header["graph"], msg.header["task"])
        return self._data_reply(Op.DATA_REPLY, key)

    async def _serve_peer(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        set_nodelay(writer)
        try:
            while True:
                msg = await read_message(reader)
                if msg.op != Op.FETCH_DATA:
                    log.warning("peer sent %s on data port, closing", msg.op)
                    break
                await write_message(writer, await self.serve_fetch(msg))
        except (ConnectionLost, ProtocolError):
            pass
        finally:
            writer.close()

    async def _peer_link(self, addr: str) -> _PeerLink:
        link = self._peer_links.get(addr)
        if link is not None:
            return link
        reader, writer = await open_stream(addr)
        link = _PeerLink(reader, writer)
        self._peer_links[addr] = link
        return link

    async def _fetch_input(self, key: TaskKey, addrs: list[str]) -> None:
        """Pull one input from its listed owners, first success wins."""
        own = self.listen_address
        for addr in addrs:
            if addr == own:
                if key in self.store:
                    return
                continue
            try:
                link = await self._peer_link(addr)
                reply = await link.request(
                    Message.make(Op.FETCH_DATA, graph=key[0], task=key[1])
                )
            except (ConnectionLost, OSError):
                self._drop_link(addr)
                continue
            if reply.header.get("found"):
                self.store[key] = reply.blob(reply.header["data"])
                return
        raise FetchError(f"input {key[0]}:{key[1]} unavailable from {addrs}")

    def _drop_link(self, addr: str) -> None:
        link = self._peer_links.pop(addr, None)
        if link is not None:
            link.close()

