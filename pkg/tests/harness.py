"""In-process cluster harness: spins a real server, workers, and client in
one event loop over unix sockets, with scheduler invariants and the task
event trace audited on every run.

Violations from every run in the session accumulate in AUDIT_LOG so the
acceptance suite can assert that no integration run anywhere violated the
eagerness or single-assignment rules.
"""

from __future__ import annotations

import asyncio
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from taskmesh.client import AsyncClient, TaskErred
from taskmesh.model import TaskGraph, TaskState
from taskmesh.scheduler import Scheduler, SchedulerUpdate, StealFailed, make_scheduler
from taskmesh.server import Server, ServerConfig
from taskmesh.trace import STEAL_FAIL, STEAL_OK, STEAL_REQ, audit_trace, parse_trace
from taskmesh.worker import Worker, WorkerConfig

AUDIT_LOG: list[str] = []
RUNS_AUDITED: list[str] = []


class AuditingScheduler(Scheduler):
    """Checks the wrapped policy's invariants after every step."""

    def __init__(self, inner: Scheduler):
        self.inner = inner
        self.name = inner.name
        self.violations: list[str] = []
        self.steps = 0
        self.steal_failed_events = 0

    def step(self, events) -> SchedulerUpdate:
        self.steal_failed_events += sum(1 for e in events if isinstance(e, StealFailed))
        update = self.inner.step(events)
        self.steps += 1
        for problem in self.inner.debug_check():
            self.violations.append(f"step {self.steps}: {problem}")
        return update

    def debug_check(self) -> list[str]:
        return self.inner.debug_check()


@dataclass(slots=True)
class RunResult:
    outputs: dict[int, bytes]
    makespan: float
    trace_events: list
    violations: list[str]
    steal_requests: int = 0
    steal_oks: int = 0
    steal_fails: int = 0
    scheduler_steal_failed_events: int = 0
    error: TaskErred | None = None
    moved_away_from: dict[int, int] = field(default_factory=dict)


async def _run(
    graph: TaskGraph,
    n_workers: int,
    scheduler: str,
    seed: int,
    zero: bool,
    duration_scales: Sequence[float] | None,
    cores: int,
    nodes: int,
    same_node_factor: float,
    donor_slack: int,
    timeout: float,
    label: str,
) -> RunResult:
    tmp = Path(tempfile.mkdtemp(prefix="taskmesh-run-"))
    trace_path = tmp / "trace.log"
    policy = make_scheduler(
        scheduler, seed=seed, same_node_factor=same_node_factor, donor_slack=donor_slack
    )
    audit = AuditingScheduler(policy)
    server = Server(
        ServerConfig(
            unix_path=str(tmp / "server.sock"),
            scheduler=scheduler,
            trace_path=str(trace_path),
        ),
        scheduler=audit,
    )
    await server.start()
    workers: list[Worker] = []
    violations: list[str] = []
    error: TaskErred | None = None
    outputs: dict[int, bytes] = {}
    makespan = 0.0
    try:
        for i in range(n_workers):
            cfg = WorkerConfig(
                server=server.address,
                listen=f"unix:{tmp}/worker{i}.sock",
                cores=cores,
                node_id=f"node{i % nodes}",
                zero=zero,
                duration_scale=duration_scales[i] if duration_scales else 1.0,
            )
            worker = Worker(cfg)
            await worker.start()
            workers.append(worker)
        await server.wait_for_workers(n_workers)
        client = AsyncClient()
        await client.connect(server.address)
        handle = await client.submit(graph)
        try:
            outputs, makespan = await client.gather(handle, timeout=timeout)
        except TaskErred as exc:
            error = exc
        await server.drain_scheduler()
        violations.extend(audit.violations)
        violations.extend(f"final: {p}" for p in audit.debug_check())
        if error is None:
            violations.extend(_check_convergence(server, workers))
        await client.close()
    finally:
        for worker in workers:
            await worker.stop()
        await server.stop()

    events = parse_trace(trace_path.read_text())
    violations.extend(audit_trace(events, {1: graph}))

    result = RunResult(
        outputs=outputs,
        makespan=makespan,
        trace_events=events,
        violations=violations,
        error=error,
        scheduler_steal_failed_events=audit.steal_failed_events,
    )
    req_donor: dict[tuple[int, int], int] = {}
    for ev in events:
        key = (ev.graph, ev.task)
        if ev.name == STEAL_REQ:
            result.steal_requests += 1
            req_donor[key] = ev.worker
        elif ev.name == STEAL_OK:
            result.steal_oks += 1
            if key in req_donor:
                donor = req_donor[key]
                result.moved_away_from[donor] = result.moved_away_from.get(donor, 0) + 1
        elif ev.name == STEAL_FAIL:
            result.steal_fails += 1

    AUDIT_LOG.extend(f"{label}: {v}" for v in violations)
    RUNS_AUDITED.append(label)
    return result


def _check_convergence(server: Server, workers: list[Worker]) -> list[str]:
    """After quiescence the reactor's picture must match worker reality."""
    problems: list[str] = []
    by_id = {w.worker_id: w for w in workers}
    for key, drec in server.data.items():
        for wid in drec.locations:
            worker = by_id.get(wid)
            if worker is None:
                problems.append(f"data {key} located on unknown worker {wid}")
            elif worker.config.zero:
                if key not in worker.presence:
                    problems.append(f"data {key} not present on zero worker {wid}")
            elif key not in worker.store:
                problems.append(f"data {key} missing from worker {wid} store")
    for worker in workers:
        if worker._queued:
            problems.append(f"worker {worker.worker_id} still has queued tasks")
        if worker.running:
            problems.append(f"worker {worker.worker_id} still has running slots")
    for key, rec in server.tasks.items():
        if rec.state not in (TaskState.FINISHED, TaskState.ERROR):
            problems.append(f"task {key} left in state {rec.state}")
    return problems


def run_cluster(
    graph: TaskGraph,
    n_workers: int = 4,
    scheduler: str = "workstealing",
    *,
    seed: int = 0,
    zero: bool = False,
    duration_scales: Sequence[float] | None = None,
    cores: int = 1,
    nodes: int = 1,
    same_node_factor: float = 0.1,
    donor_slack: int = 1,
    timeout: float = 120.0,
    label: str = "run",
) -> RunResult:
    return asyncio.run(
        _run(
            graph,
            n_workers,
            scheduler,
            seed,
            zero,
            duration_scales,
            cores,
            nodes,
            same_node_factor,
            donor_slack,
            timeout,
            label,
        )
    )
