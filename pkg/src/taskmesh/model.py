"""Task graphs, payload execution, and task lifecycle states.

Everything here is an immutable value shared by copy between the server,
schedulers, workers, and clients, so instances are always safe to hand
across threads and processes.
"""

from __future__ import annotations

import enum
import random
import time
from dataclasses import dataclass, field


class GraphError(ValueError):
    """The task graph violates a structural invariant."""


class CycleDetected(GraphError):
    """The dependency relation contains a cycle."""


class DanglingReference(GraphError):
    """An input or output references a task id not present in the graph."""


class PayloadError(ValueError):
    """A payload cannot be executed with the inputs it was given."""


class PayloadKind(enum.Enum):
    SLEEP = "SLEEP"
    SUM = "SUM"
    CONST = "CONST"
    NOISE = "NOISE"


CONST_FILL = 0x42
SUM_VALUE_BYTES = 8


@dataclass(frozen=True, slots=True)
class PayloadSpec:
    """What a task computes: a closed set of deterministic payloads.

    SLEEP waits ``duration_ms`` and emits ``output_size`` zero bytes.
    CONST emits ``output_size`` bytes of 0x42 with no delay.
    NOISE emits ``output_size`` pseudorandom bytes seeded by the task id.
    SUM busy-waits ``duration_ms`` and emits the little-endian 64-bit sum
    of the first 8 bytes of each input.
    """

    kind: PayloadKind
    duration_ms: int = 0
    output_size: int = 0

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")
        if self.output_size < 0:
            raise ValueError("output_size must be >= 0")

    def effective_output_size(self) -> int:
        """Size of the produced value; SUM always emits 8 bytes."""
        if self.kind is PayloadKind.SUM:
            return SUM_VALUE_BYTES
        return self.output_size


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """One vertex of the task graph."""

    id: int
    inputs: tuple[int, ...] = ()
    payload: PayloadSpec = field(default_factory=lambda: PayloadSpec(PayloadKind.SLEEP))
    priority_hint: int = 0

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True, slots=True)
class TaskGraph:
    """A DAG of tasks plus the task ids the client wants returned."""

    tasks: tuple[TaskSpec, ...]
    outputs: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def task_map(self) -> dict[int, TaskSpec]:
        return {t.id: t for t in self.tasks}


@dataclass(frozen=True, slots=True)
class GraphStats:
    """Structural summary of a validated graph."""

    task_count: int
    dep_count: int
    avg_output_size_kib: float
    avg_duration_ms: float
    longest_path: int

    def table_row(self, name: str) -> str:
        return (
            f"{name}\t{self.task_count}\t{self.dep_count}\t"
            f"{self.avg_output_size_kib:.2f}\t{self.avg_duration_ms:.3f}\t"
            f"{self.longest_path}"
        )


class TaskState(enum.Enum):
    WAITING = "waiting"
    READY = "ready"
    ASSIGNED = "assigned"
    RUNNING = "running"
    FINISHED = "finished"
    ERROR = "error"


# ASSIGNED -> READY models a successful retraction; WAITING/READY -> ERROR
# model upstream failure propagation.
LEGAL_TRANSITIONS = frozenset(
    {
        (TaskState.WAITING, TaskState.READY),
        (TaskState.READY, TaskState.ASSIGNED),
        (TaskState.ASSIGNED, TaskState.RUNNING),
        (TaskState.ASSIGNED, TaskState.READY),
        (TaskState.RUNNING, TaskState.FINISHED),
        (TaskState.RUNNING, TaskState.ERROR),
        (TaskState.ASSIGNED, TaskState.ERROR),
        (TaskState.WAITING, TaskState.ERROR),
        (TaskState.READY, TaskState.ERROR),
    }
)


def is_legal_transition(src: TaskState, dst: TaskState) -> bool:
    return (src, dst) in LEGAL_TRANSITIONS


def validate_graph(graph: TaskGraph) -> GraphStats:
    """Check all graph invariants and compute its stats.

    Raises CycleDetected for cyclic dependency relations, DanglingReference
    for unresolved input/output ids, and GraphError for duplicate ids or
    duplicate inputs. The longest path is measured in arcs via dynamic
    programming over a topological order.
    """
    if not graph.tasks:
        raise GraphError("graph has no tasks")

    by_id: dict[int, TaskSpec] = {}
    for task in graph.tasks:
        if task.id in by_id:
            raise GraphError(f"duplicate task id {task.id}")
        by_id[task.id] = task

    consumers: dict[int, list[int]] = {tid: [] for tid in by_id}
    indegree: dict[int, int] = {tid: 0 for tid in by_id}
    dep_count = 0
    for task in graph.tasks:
        seen: set[int] = set()
        for inp in task.inputs:
            if inp == task.id:
                raise CycleDetected(f"task {task.id} depends on itself")
            if inp in seen:
                raise GraphError(f"task {task.id} lists input {inp} twice")
            seen.add(inp)
            if inp not in by_id:
                raise DanglingReference(f"task {task.id} references missing task {inp}")
            consumers[inp].append(task.id)
            indegree[task.id] += 1
            dep_count += 1

    for out in graph.outputs:
        if out not in by_id:
            raise DanglingReference(f"output references missing task {out}")

    # Kahn topological pass; also the longest-path DP substrate.
    depth: dict[int, int] = {}
    frontier = [tid for tid, deg in indegree.items() if deg == 0]
    for tid in frontier:
        depth[tid] = 0
    processed = 0
    while frontier:
        next_frontier: list[int] = []
        for tid in frontier:
            processed += 1
            d = depth[tid]
            for consumer in consumers[tid]:
                if depth.get(consumer, -1) < d + 1:
                    depth[consumer] = d + 1
                indegree[consumer] -= 1
                if indegree[consumer] == 0:
                    next_frontier.append(consumer)
        frontier = next_frontier
    if processed != len(by_id):
        raise CycleDetected("dependency relation contains a cycle")

    total_bytes = sum(t.payload.effective_output_size() for t in graph.tasks)
    total_ms = sum(t.payload.duration_ms for t in graph.tasks)
    n = len(graph.tasks)
    return GraphStats(
        task_count=n,
        dep_count=dep_count,
        avg_output_size_kib=total_bytes / n / 1024.0,
        avg_duration_ms=total_ms / n,
        longest_path=max(depth.values()),
    )


def _busy_wait(seconds: float) -> None:
    deadline = time.perf_counter() + seconds
    while time.perf_counter() < deadline:
        pass


def execute_payload(
    spec: PayloadSpec,
    input_values: list[bytes],
    *,
    task_id: int = 0,
    duration_scale: float = 1.0,
) -> bytes:
    """Run one payload to completion and return its output bytes.

    SLEEP releases the GIL for its wait (plain sleep) so multi-slot
    workers overlap; SUM burns CPU for its duration. ``duration_scale``
    multiplies the spec duration so desk-scale runs can be shortened.
    """
    if spec.kind is PayloadKind.SUM:
        if not input_values:
            raise PayloadError("SUM payload requires at least one input")
        total = 0
        for value in input_values:
            if len(value) < SUM_VALUE_BYTES:
                raise PayloadError(
                    f"SUM input has {len(value)} bytes, needs at least {SUM_VALUE_BYTES}"
                )
            total += int.from_bytes(value[:SUM_VALUE_BYTES], "little")
        if spec.duration_ms:
            _busy_wait(spec.duration_ms * duration_scale / 1000.0)
        return (total & 0xFFFFFFFFFFFFFFFF).to_bytes(SUM_VALUE_BYTES, "little")
    if spec.kind is PayloadKind.SLEEP:
        if spec.duration_ms:
            time.sleep(spec.duration_ms * duration_scale / 1000.0)
        return bytes(spec.output_size)
    if spec.kind is PayloadKind.CONST:
        return bytes((CONST_FILL,)) * spec.output_size
    if spec.kind is PayloadKind.NOISE:
        return random.Random(task_id).randbytes(spec.output_size)
    raise PayloadError(f"unknown payload kind {spec.kind!r}")
