"""The server: an I/O reactor in front of a swappable scheduler.

The reactor owns every connection and all authoritative task and data
bookkeeping. Scheduling decisions live in a Scheduler instance running on
its own thread; the two sides exchange only immutable values over a pair
of ordered queues (event batches out, updates back), and each builds its
own copy of the task graph. Events are batched per loop pass so a burst
of worker messages costs one scheduler wakeup.

The retraction protocol is confirm-first: after a STEAL_REQUEST is sent,
the task is re-sent to its new worker only once the old worker confirmed
it gave the task back, so a task is never queued on two workers at once.
"""

from __future__ import annotations

import asyncio
import logging
import queue
import threading
import time
from dataclasses import dataclass, field

from .model import (
    GraphError,
    TaskGraph,
    TaskSpec,
    PayloadKind,
    PayloadSpec,
    TaskState,
    is_legal_transition,
    validate_graph,
)
from .protocol import (
    BlobPlaceholder,
    ConnectionLost,
    Message,
    Op,
    ProtocolError,
    encode,
    read_message,
    write_message,
)
from .scheduler import (
    GraphSubmitted,
    Scheduler,
    SchedulerUpdate,
    StealFailed,
    TaskFinished,
    WorkerDescriptor,
    WorkerJoined,
    WorkerLeft,
    make_scheduler,
)
from .scheduler.base import TaskKey
from .net import bound_address, set_nodelay, start_stream_server
from .trace import (
    ASSIGN,
    ERROR,
    FINISHED,
    READY,
    STEAL_FAIL,
    STEAL_OK,
    STEAL_REQ,
    TraceWriter,
)

log = logging.getLogger("taskmesh.server")


class _Fault(Exception):
    """Protocol violation by a peer; the connection gets closed."""


@dataclass(slots=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 7421
    unix_path: str | None = None
    scheduler: str = "workstealing"
    seed: int = 0
    same_node_factor: float = 0.1
    donor_slack: int = 1
    trace_path: str | None = None

    @property
    def listen_spec(self) -> str:
        if self.unix_path:
            return f"unix:{self.unix_path}"
        return f"{self.host}:{self.port}"


@dataclass(slots=True)
class _WorkerConn:
    id: int
    node: str
    cores: int
    listen: str
    writer: asyncio.StreamWriter


@dataclass(slots=True)
class _ClientConn:
    id: int
    writer: asyncio.StreamWriter


@dataclass(slots=True)
class _TaskRecord:
    graph: int
    spec: TaskSpec
    state: TaskState = TaskState.WAITING
    assigned_worker: int | None = None
    unfinished_inputs: int = 0
    dependents: list[int] = field(default_factory=list)
    remaining_consumers: int = 0
    is_output: bool = False
    priority: int = 0
    retraction_pending: bool = False
    pending_target: int | None = None
    # Worker choice made before the task was ready (random policy
    # assigns on arrival); dispatched once the task becomes ready.
    preassigned: tuple[int, int] | None = None

    @property
    def key(self) -> TaskKey:
        return (self.graph, self.spec.id)


@dataclass(slots=True)
class _GraphRecord:
    id: int
    client: int
    graph: TaskGraph
    outputs: frozenset[int]
    task_count: int
    submitted_ns: int


@dataclass(slots=True)
class _DataRecord:
    size: int
    locations: set[int]


class Server:
    def __init__(self, config: ServerConfig, scheduler: Scheduler | None = None):
        self.config = config
        self.scheduler = scheduler or make_scheduler(
            config.scheduler,
            seed=config.seed,
            same_node_factor=config.same_node_factor,
            donor_slack=config.donor_slack,
        )
        self.trace = TraceWriter(config.trace_path)
        self.workers: dict[int, _WorkerConn] = {}
        self.clients: dict[int, _ClientConn] = {}
        self.tasks: dict[TaskKey, _TaskRecord] = {}
        self.data: dict[TaskKey, _DataRecord] = {}
        self.graphs: dict[int, _GraphRecord] = {}
        self._pending_results: dict[TaskKey, int] = {}
        self._next_worker = 1
        self._next_client = 1
        self._next_graph = 1
        self._event_batch: list = []
        self._flush_scheduled = False
        self._sched_in: queue.Queue = queue.Queue()
        self._updates: asyncio.Queue = asyncio.Queue()
        self._sched_thread: threading.Thread | None = None
        self._dispatcher: asyncio.Task | None = None
        self._tcp_server: asyncio.Server | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self.stopped = asyncio.Event()

    # -- lifecycle -------------------------------------------------------

    @property
    def address(self) -> str:
        assert self._tcp_server is not None
        return bound_address(self._tcp_server, self.config.listen_spec)

    @property
    def port(self) -> int:
        assert self._tcp_server is not None and self.config.unix_path is None
        return self._tcp_server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._tcp_server = await start_stream_server(self._handle_conn, self.config.listen_spec)
        self._sched_thread = threading.Thread(
            target=self._scheduler_main, name="taskmesh-scheduler", daemon=True
        )
        self._sched_thread.start()
        self._dispatcher = asyncio.create_task(self._dispatch_loop())
        log.info("server listening on %s scheduler=%s", self.address, self.scheduler.name)

    async def stop(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._sched_thread is not None:
            self._sched_in.put(None)
            self._sched_thread.join(timeout=5)
        if self._dispatcher is not None:
            self._updates.put_nowait(None)
            await self._dispatcher
        for conn in list(self.workers.values()):
            conn.writer.close()
        for conn in list(self.clients.values()):
            conn.writer.close()
        self.trace.close()
        self.stopped.set()

    async def wait_for_workers(self, count: int, timeout: float = 30.0) -> None:
        deadline = time.monotonic() + timeout
        while len(self.workers) < count:
            if time.monotonic() > deadline:
                raise TimeoutError(f"only {len(self.workers)}/{count} workers joined")
            await asyncio.sleep(0.005)

    # -- scheduler exchange ----------------------------------------------

    def _scheduler_main(self) -> None:
        while True:
            batch = self._sched_in.get()
            try:
                if batch is None:
                    return
                try:
                    update = self.scheduler.step(batch)
                except BaseException:
                    log.exception("scheduler step failed; state is corrupt")
                    raise
                if update and self._loop is not None:
                    self._loop.call_soon_threadsafe(self._updates.put_nowait, update)
            finally:
                self._sched_in.task_done()

    def _emit(self, event) -> None:
        self._event_batch.append(event)
        if not self._flush_scheduled:
            self._flush_scheduled = True
            assert self._loop is not None
            self._loop.call_soon(self._flush_events)

    def _flush_events(self) -> None:
        self._flush_scheduled = False
        if self._event_batch:
            batch, self._event_batch = self._event_batch, []
            self._sched_in.put(batch)

    async def _dispatch_loop(self) -> None:
        while True:
            update = await self._updates.get()
            try:
                if update is None:
                    return
                self.dispatch_update(update)
            except Exception:
                log.exception("dispatch failed")
            finally:
                self._updates.task_done()

    async def drain_scheduler(self, settle_rounds: int = 3) -> None:
        """Block until no internal scheduler work is in flight.

        Test hook: with no external messages pending this reaches the
        reactor/scheduler fixed point used by convergence checks.
        """
        assert self._loop is not None
        for _ in range(settle_rounds):
            while True:
                self._flush_events()
                await self._loop.run_in_executor(None, self._sched_in.join)
                await self._updates.join()
                if not self._event_batch:
                    break
            await asyncio.sleep(0.02)

    # -- connection handling ----------------------------------------------

    async def _handle_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        set_nodelay(writer)
        try:
            hello = await read_message(reader)
        except (ConnectionLost, ProtocolError):
            writer.close()
            return
        try:
            if hello.op == Op.REGISTER_WORKER:
                await self._worker_session(hello, reader, writer)
            elif hello.op == Op.REGISTER_CLIENT:
                await self._client_session(reader, writer)
            elif hello.op == Op.SHUTDOWN:
                await self.shutdown()
            else:
                log.warning("connection opened with %s, closing", hello.op)
        finally:
            writer.close()

    async def _worker_session(self, hello, reader, writer) -> None:
        header = hello.header
        cores = header.get("cores", 0)
        if not isinstance(cores, int) or cores < 1:
            log.warning("worker registration with bad cores %r", cores)
            return
        wid = self._next_worker
        self._next_worker += 1
        conn = _WorkerConn(
            id=wid,
            node=str(header.get("node_id", f"worker{wid}")),
            cores=cores,
            listen=str(header.get("listen", "")),
            writer=writer,
        )
        self.workers[wid] = conn
        await write_message(writer, Message.make(Op.REGISTER_WORKER, worker_id=wid))
        self._emit(WorkerJoined(WorkerDescriptor(worker=wid, node=conn.node, cores=cores)))
        log.info("worker %d joined node=%s cores=%d", wid, conn.node, cores)
        try:
            while True:
                msg = await read_message(reader)
                op = msg.op
                if op == Op.TASK_FINISHED:
                    self.handle_task_finished(wid, msg)
                elif op == Op.TASK_ERRED:
                    self._handle_task_erred(wid, msg)
                elif op == Op.STEAL_RESPONSE:
                    self.handle_steal_response(wid, msg)
                elif op == Op.DATA_PLACED:
                    self.handle_data_placed(wid, msg)
                elif op == Op.RESULT_REPLY:
                    self._handle_result_reply(wid, msg)
                elif op == Op.HEARTBEAT:
                    pass
                else:
                    raise _Fault(f"unexpected op {op} from worker {wid}")
        except ConnectionLost:
            pass
        except _Fault as exc:
            log.warning("protocol fault: %s", exc)
        except ProtocolError as exc:
            log.warning("worker %d protocol error: %s", wid, exc)
        finally:
            self._worker_lost(wid)

    async def _client_session(self, reader, writer) -> None:
        cid = self._next_client
        self._next_client += 1
        self.clients[cid] = _ClientConn(id=cid, writer=writer)
        await write_message(writer, Message.make(Op.REGISTER_CLIENT, client_id=cid))
        try:
            while True:
                msg = await read_message(reader)
                op = msg.op
                if op == Op.SUBMIT_GRAPH:
                    await self.handle_submit(cid, msg)
                elif op == Op.HEARTBEAT:
                    await write_message(writer, Message.make(Op.HEARTBEAT))
                elif op == Op.SHUTDOWN:
                    await self.shutdown()
                    return
                else:
                    raise _Fault(f"unexpected op {op} from client {cid}")
        except ConnectionLost:
            pass
        except _Fault as exc:
            log.warning("protocol fault: %s", exc)
        finally:
            self.clients.pop(cid, None)

    async def shutdown(self) -> None:
        log.info("shutdown requested")
        for conn in list(self.workers.values()):
            try:
                await write_message(conn.writer, Message.make(Op.SHUTDOWN))
            except ConnectionLost:
                pass
        await self.stop()

    # -- graph submission ---------------------------------------------------

    async def handle_submit(self, client_id: int, msg: Message) -> None:
        writer = self.clients[client_id].writer
        try:
            graph = _graph_from_header(msg.header)
            validate_graph(graph)
        except (ValueError, TypeError) as exc:
            await write_message(
                writer,
                Message.make(
                    Op.SUBMIT_GRAPH,
                    ok=False,
                    error_kind=type(exc).__name__,
                    error=str(exc),
                ),
            )
            return
        gid = self._next_graph
        self._next_graph += 1
        outputs = frozenset(graph.outputs)
        self.graphs[gid] = _GraphRecord(
            id=gid,
            client=client_id,
            graph=graph,
            outputs=outputs,
            task_count=len(graph.tasks),
            submitted_ns=time.monotonic_ns(),
        )
        consumer_counts: dict[int, int] = {t.id: 0 for t in graph.tasks}
        for task in graph.tasks:
            for inp in task.inputs:
                consumer_counts[inp] += 1
        for task in graph.tasks:
            rec = _TaskRecord(
                graph=gid,
                spec=task,
                unfinished_inputs=len(task.inputs),
                remaining_consumers=consumer_counts[task.id],
                is_output=task.id in outputs,
            )
            self.tasks[rec.key] = rec
        for task in graph.tasks:
            for inp in task.inputs:
                self.tasks[(gid, inp)].dependents.append(task.id)
        for task in graph.tasks:
            rec = self.tasks[(gid, task.id)]
            if rec.unfinished_inputs == 0:
                self._set_state(rec, TaskState.READY)
                self.trace.event(gid, task.id, READY)
        await write_message(
            writer,
            Message.make(Op.SUBMIT_GRAPH, ok=True, graph=gid, task_count=len(graph.tasks)),
        )
        self._emit(GraphSubmitted(graph_id=gid, graph=graph))

    # -- scheduler updates --------------------------------------------------

    def dispatch_update(self, update: SchedulerUpdate) -> None:
        touched: set[int] = set()
        for a in update.assignments:
            key = (a.graph_id, a.task)
            rec = self.tasks.get(key)
            assert rec is not None, f"assignment for unknown task {key}"
            if rec.state is TaskState.READY:
                self._send_assign(rec, a.worker, a.priority, touched)
            elif rec.state is TaskState.WAITING:
                rec.preassigned = (a.worker, a.priority)
            elif rec.state is TaskState.ERROR:
                pass  # errored before the decision arrived
            else:
                log.warning("assignment for task %s in state %s dropped", key, rec.state)
        for r in update.retractions:
            key = (r.graph_id, r.task)
            rec = self.tasks.get(key)
            assert rec is not None, f"retraction for unknown task {key}"
            conn = self.workers.get(r.from_worker)
            if (
                rec.state is not TaskState.ASSIGNED
                or rec.assigned_worker != r.from_worker
                or rec.retraction_pending
                or conn is None
            ):
                # Completed, errored, or lost in the meantime: the move
                # cannot happen, let the scheduler unwind it.
                self._emit(StealFailed(graph_id=key[0], task=key[1]))
                continue
            rec.retraction_pending = True
            rec.pending_target = r.to_worker
            self.trace.event(key[0], key[1], STEAL_REQ, r.from_worker)
            self._post(conn, Message.make(Op.STEAL_REQUEST, graph=key[0], task=key[1]), touched)
        self._drain(touched)

    def _send_assign(self, rec: _TaskRecord, worker_id: int, priority: int,
                     touched: set[int] | None = None) -> None:
        conn = self.workers.get(worker_id)
        key = rec.key
        if conn is None:
            # Worker vanished between decision and dispatch.
            self._mark_error(key, key, f"worker {worker_id} lost before assignment")
            return
        self._set_state(rec, TaskState.ASSIGNED)
        rec.assigned_worker = worker_id
        rec.priority = priority
        rec.preassigned = None
        locations = []
        for inp in rec.spec.inputs:
            drec = self.data.get((rec.graph, inp))
            addrs = []
            if drec is not None:
                addrs = [
                    self.workers[w].listen for w in sorted(drec.locations) if w in self.workers
                ]
            locations.append([inp, addrs])
        payload = rec.spec.payload
        msg = Message.make(
            Op.ASSIGN_TASK,
            graph=rec.graph,
            task=rec.spec.id,
            kind=payload.kind.value,
            dur_ms=payload.duration_ms,
            out_bytes=payload.output_size,
            priority=priority,
            inputs=list(rec.spec.inputs),
            locations=locations,
        )
        self.trace.event(key[0], key[1], ASSIGN, worker_id)
        self._post(conn, msg, touched)

    def _post(self, conn: _WorkerConn | _ClientConn, msg: Message,
              touched: set[int] | None = None) -> None:
        """Queue a message on a connection; flushing happens per batch."""
        try:
            conn.writer.write(encode(msg))
        except (ConnectionResetError, BrokenPipeError, OSError):
            return
        if touched is not None:
            touched.add(conn.id)

    def _drain(self, touched: set[int]) -> None:
        # Transport buffers flush as the loop iterates; nothing to await
        # at desk scale. Kept as the single flush point if backpressure
        # handling ever becomes necessary.
        touched.clear()

    # -- worker messages ------------------------------------------------------

    def handle_task_finished(self, worker_id: int, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        rec = self.tasks.get(key)
        if rec is None:
            raise _Fault(f"finish for unknown task {key}")
        if rec.state in (TaskState.FINISHED, TaskState.ERROR):
            log.warning("duplicate/late finish for %s ignored", key)
            return
        if rec.state not in (TaskState.ASSIGNED, TaskState.RUNNING):
            raise _Fault(f"finish for task {key} in state {rec.state}")
        if rec.assigned_worker != worker_id:
            log.warning(
                "task %s finished on worker %d but assigned to %s",
                key, worker_id, rec.assigned_worker,
            )
        if rec.state is TaskState.ASSIGNED:
            self._set_state(rec, TaskState.RUNNING)
        self._set_state(rec, TaskState.FINISHED)
        size = msg.header["out_bytes"]
        self.data[key] = _DataRecord(size=size, locations={worker_id})
        self.trace.event(key[0], key[1], FINISHED, worker_id)
        self._emit(TaskFinished(graph_id=key[0], task=key[1], worker=worker_id, output_size=size))
        for dep in rec.dependents:
            drec = self.tasks[(key[0], dep)]
            if drec.state is not TaskState.WAITING:
                continue
            drec.unfinished_inputs -= 1
            if drec.unfinished_inputs == 0:
                self._set_state(drec, TaskState.READY)
                self.trace.event(key[0], dep, READY)
                if drec.preassigned is not None:
                    worker, priority = drec.preassigned
                    self._send_assign(drec, worker, priority)
        releases: dict[int, list[int]] = {}
        for inp in rec.spec.inputs:
            irec = self.tasks[(key[0], inp)]
            irec.remaining_consumers -= 1
            if irec.remaining_consumers == 0 and not irec.is_output:
                self._release_data((key[0], inp), releases)
        if rec.remaining_consumers == 0 and not rec.is_output:
            self._release_data(key, releases)
        for wid, tids in releases.items():
            conn = self.workers.get(wid)
            if conn is not None:
                self._post(conn, Message.make(Op.RELEASE_DATA, graph=key[0], tasks=tids))
        if rec.is_output:
            self._request_result(key, worker_id)

    def _release_data(self, key: TaskKey, releases: dict[int, list[int]]) -> None:
        drec = self.data.pop(key, None)
        if drec is None:
            return
        for wid in drec.locations:
            releases.setdefault(wid, []).append(key[1])

    def _request_result(self, key: TaskKey, worker_id: int) -> None:
        conn = self.workers.get(worker_id)
        if conn is None:
            self._mark_error(key, key, "output lost with its worker")
            return
        self._pending_results[key] = worker_id
        self._post(conn, Message.make(Op.FETCH_RESULT, graph=key[0], task=key[1]))

    def _handle_result_reply(self, worker_id: int, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        expected = self._pending_results.pop(key, None)
        if expected is None:
            raise _Fault(f"unsolicited result for {key}")
        if not msg.header.get("found"):
            self._mark_error(key, key, "output data missing on worker")
            return
        grec = self.graphs.get(key[0])
        if grec is None:
            return
        client = self.clients.get(grec.client)
        if client is None:
            return
        self._post(
            client,
            Message(
                header={
                    "op": Op.RESULT_REPLY.value,
                    "graph": key[0],
                    "task": key[1],
                    "found": True,
                    "data": BlobPlaceholder(0),
                },
                blobs=(msg.blobs[0],),
            ),
        )

    def _handle_task_erred(self, worker_id: int, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        if key not in self.tasks:
            raise _Fault(f"error report for unknown task {key}")
        self._mark_error(key, key, msg.header.get("error", "task failed"))

    def handle_steal_response(self, worker_id: int, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        rec = self.tasks.get(key)
        if rec is None or not rec.retraction_pending:
            raise _Fault(f"steal response for non-pending task {key}")
        rec.retraction_pending = False
        target = rec.pending_target
        rec.pending_target = None
        if rec.state in (TaskState.FINISHED, TaskState.ERROR):
            # The task completed while the request was in flight; the
            # scheduler still has to unwind its provisional move.
            self._emit(StealFailed(graph_id=key[0], task=key[1]))
            return
        if msg.header["success"]:
            self.trace.event(key[0], key[1], STEAL_OK, target)
            if target not in self.workers:
                self._mark_error(key, key, f"retraction target {target} lost")
                return
            self._set_state(rec, TaskState.READY)
            self._send_assign(rec, target, rec.priority)
        else:
            # Refusal proves the task is already running (or done) there.
            self.trace.event(key[0], key[1], STEAL_FAIL, rec.assigned_worker)
            if rec.state is TaskState.ASSIGNED:
                self._set_state(rec, TaskState.RUNNING)
            self._emit(StealFailed(graph_id=key[0], task=key[1]))

    def handle_data_placed(self, worker_id: int, msg: Message) -> None:
        key = (msg.header["graph"], msg.header["task"])
        rec = self.tasks.get(key)
        if rec is None or rec.state is not TaskState.FINISHED:
            raise _Fault(f"data placed for non-finished task {key}")
        drec = self.data.get(key)
        if drec is not None:
            drec.locations.add(worker_id)

    # -- failure handling -------------------------------------------------------

    def _worker_lost(self, worker_id: int) -> None:
        conn = self.workers.pop(worker_id, None)
        if conn is None:
            return
        log.info("worker %d lost", worker_id)
        self._emit(WorkerLeft(worker=worker_id))
        for rec in list(self.tasks.values()):
            if rec.assigned_worker == worker_id and rec.state in (
                TaskState.ASSIGNED,
                TaskState.RUNNING,
            ):
                self._mark_error(rec.key, rec.key, f"worker {worker_id} lost")
        for key, drec in list(self.data.items()):
            drec.locations.discard(worker_id)
            if drec.locations:
                continue
            # The object is gone everywhere; fail everything that still
            # needed it rather than recomputing lineage.
            del self.data[key]
            rec = self.tasks[key]
            for dep in rec.dependents:
                dep_key = (key[0], dep)
                if self.tasks[dep_key].state not in (TaskState.FINISHED, TaskState.ERROR):
                    self._mark_error(dep_key, key, f"input {key[1]} lost with worker")
        for key, wid in list(self._pending_results.items()):
            if wid != worker_id:
                continue
            del self._pending_results[key]
            drec = self.data.get(key)
            if drec is not None and drec.locations:
                self._request_result(key, sorted(drec.locations)[0])
            else:
                self._mark_error(key, key, "output lost with its worker")

    def _mark_error(self, key: TaskKey, root: TaskKey, error: str) -> None:
        rec = self.tasks.get(key)
        if rec is None or rec.state in (TaskState.FINISHED, TaskState.ERROR):
            return
        affected: list[TaskKey] = []
        stack = [key]
        while stack:
            cur = stack.pop()
            cur_rec = self.tasks[cur]
            if cur_rec.state in (TaskState.FINISHED, TaskState.ERROR):
                continue
            cur_rec.retraction_pending = False
            cur_rec.pending_target = None
            self._set_state(cur_rec, TaskState.ERROR)
            self.trace.event(cur[0], cur[1], ERROR)
            affected.append(cur)
            stack.extend((cur[0], dep) for dep in cur_rec.dependents)
        outputs_hit = [k for k in affected if self.tasks[k].is_output]
        if not outputs_hit:
            return
        grec = self.graphs.get(key[0])
        if grec is None:
            return
        client = self.clients.get(grec.client)
        if client is None:
            return
        self._post(
            client,
            Message.make(Op.TASK_ERRED, graph=key[0], task=root[1], error=error),
        )

    # -- shared helpers -----------------------------------------------------------

    def _set_state(self, rec: _TaskRecord, new: TaskState) -> None:
        assert is_legal_transition(rec.state, new), (
            f"illegal transition {rec.state} -> {new} for {rec.key}"
        )
        rec.state = new

    def debug_snapshot(self) -> dict:
        """Reactor-side state for convergence checks in integration tests."""
        return {
            "tasks": {key: rec.state for key, rec in self.tasks.items()},
            "data": {key: set(rec.locations) for key, rec in self.data.items()},
            "workers": sorted(self.workers),
        }


def _graph_from_header(header: dict) -> TaskGraph:
    rows = header.get("tasks")
    outputs = header.get("outputs", [])
    if not isinstance(rows, list):
        raise GraphError("submission carries no task list")
    tasks = []
    for row in rows:
        if not isinstance(row, list) or len(row) != 6:
            raise GraphError(f"bad task row {row!r}")
        tid, inputs, kind, dur_ms, out_bytes, hint = row
        try:
            payload = PayloadSpec(
                kind=PayloadKind(kind), duration_ms=dur_ms, output_size=out_bytes
            )
        except ValueError as exc:
            raise GraphError(str(exc)) from exc
        tasks.append(
            TaskSpec(id=tid, inputs=tuple(inputs), payload=payload, priority_hint=hint)
        )
    return TaskGraph(tasks=tuple(tasks), outputs=tuple(outputs))


def graph_to_header_rows(graph: TaskGraph) -> list:
    """Wire form of a task graph, shared with the client SDK."""
    return [
        [t.id, list(t.inputs), t.payload.kind.value, t.payload.duration_ms,
         t.payload.output_size, t.priority_hint]
        for t in graph.tasks
    ]
