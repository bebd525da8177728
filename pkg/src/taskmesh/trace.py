"""Structured task event traces and their audit.

The server writes one line per task state transition:

    <monotonic_ns> <graph>:<task> <event> [<worker>]

Events: ready, assign, steal_req, steal_ok, steal_fail, finished, error.
``audit_trace`` replays a trace against the protocol's safety rules and
returns every violation it finds, so integration runs can assert that no
task was ever queued on two workers at once and that assignments respect
dependency order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from .model import TaskGraph

READY = "ready"
ASSIGN = "assign"
STEAL_REQ = "steal_req"
STEAL_OK = "steal_ok"
STEAL_FAIL = "steal_fail"
FINISHED = "finished"
ERROR = "error"


class TraceWriter:
    """Buffered task-event log; one instance per server."""

    def __init__(self, path: str | Path | None):
        self._file = open(path, "w", buffering=1 << 20) if path else None

    @property
    def enabled(self) -> bool:
        return self._file is not None

    def event(self, graph: int, task: int, name: str, worker: int | None = None) -> None:
        if self._file is None:
            return
        line = f"{time.monotonic_ns()} {graph}:{task} {name}"
        if worker is not None:
            line += f" {worker}"
        self._file.write(line + "\n")

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


@dataclass(frozen=True, slots=True)
class TraceEvent:
    ns: int
    graph: int
    task: int
    name: str
    worker: int | None


def parse_trace(text: str) -> list[TraceEvent]:
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"trace line {lineno}: expected 3 or 4 fields")
        graph_s, _, task_s = parts[1].partition(":")
        events.append(
            TraceEvent(
                ns=int(parts[0]),
                graph=int(graph_s),
                task=int(task_s),
                name=parts[2],
                worker=int(parts[3]) if len(parts) == 4 else None,
            )
        )
    return events


def audit_trace(events: list[TraceEvent], graphs: dict[int, TaskGraph] | None = None) -> list[str]:
    """Replay a trace and report safety violations.

    Checks, per task: the event sequence follows the lifecycle (ready ->
    assign -> finished, with steal_req/steal_ok/steal_fail between assign
    and the terminal event); a task is never assigned to a second worker
    without a successful retraction in between; the finish comes from the
    worker currently holding the task; nothing happens after a terminal
    event. With the graphs given, also checks every assign and finish
    happens only after all of the task's inputs finished.
    """
    violations: list[str] = []
    state: dict[tuple[int, int], str] = {}
    holder: dict[tuple[int, int], int | None] = {}
    steal_from: dict[tuple[int, int], int | None] = {}
    finished: set[tuple[int, int]] = set()
    inputs: dict[tuple[int, int], tuple[int, ...]] = {}
    if graphs:
        for gid, graph in graphs.items():
            for task in graph.tasks:
                inputs[(gid, task.id)] = task.inputs

    def bad(event: TraceEvent, why: str) -> None:
        violations.append(f"{event.graph}:{event.task} {event.name}: {why}")

    for ev in events:
        key = (ev.graph, ev.task)
        st = state.get(key, "new")
        if st in (FINISHED, ERROR):
            bad(ev, f"event after terminal state {st}")
            continue
        if ev.name == READY:
            if st != "new":
                bad(ev, f"ready out of order (state {st})")
            state[key] = READY
        elif ev.name == ASSIGN:
            if st not in (READY, STEAL_OK):
                bad(ev, f"assigned while in state {st}")
            if ev.worker is None:
                bad(ev, "assign without worker")
            if st == STEAL_OK and ev.worker != holder.get(key):
                bad(ev, "reassignment does not match retraction target")
            if graphs and key in inputs:
                missing = [i for i in inputs[key] if (ev.graph, i) not in finished]
                if missing:
                    bad(ev, f"assigned before inputs finished: {missing}")
            state[key] = ASSIGN
            if st == READY:
                holder[key] = ev.worker
        elif ev.name == STEAL_REQ:
            if st != ASSIGN:
                bad(ev, f"steal requested while in state {st}")
            elif ev.worker != holder.get(key):
                bad(ev, f"steal requested from {ev.worker}, holder is {holder.get(key)}")
            steal_from[key] = holder.get(key)
            state[key] = STEAL_REQ
        elif ev.name == STEAL_OK:
            if st != STEAL_REQ:
                bad(ev, f"steal_ok without pending steal (state {st})")
            # worker field names the new target; task is unqueued until
            # the follow-up assign.
            holder[key] = ev.worker
            state[key] = STEAL_OK
        elif ev.name == STEAL_FAIL:
            if st != STEAL_REQ:
                bad(ev, f"steal_fail without pending steal (state {st})")
            holder[key] = steal_from.get(key)
            state[key] = ASSIGN
        elif ev.name == FINISHED:
            if st not in (ASSIGN, STEAL_REQ):
                bad(ev, f"finished while in state {st}")
            if ev.worker is not None and holder.get(key) is not None and ev.worker != holder[key]:
                bad(ev, f"finished on {ev.worker}, holder is {holder.get(key)}")
            if graphs and key in inputs:
                missing = [i for i in inputs[key] if (ev.graph, i) not in finished]
                if missing:
                    bad(ev, f"finished before inputs finished: {missing}")
            state[key] = FINISHED
            finished.add(key)
        elif ev.name == ERROR:
            state[key] = ERROR
        else:
            bad(ev, "unknown event")
    return violations
