"""The scheduler contract: events in, assignments and retractions out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from ..model import TaskGraph

# Tasks are identified by (graph id, task id) across the whole cluster.
TaskKey = tuple[int, int]


@dataclass(frozen=True, slots=True)
class WorkerDescriptor:
    worker: int
    node: str
    cores: int


@dataclass(frozen=True, slots=True)
class GraphSubmitted:
    graph_id: int
    graph: TaskGraph


@dataclass(frozen=True, slots=True)
class TaskFinished:
    graph_id: int
    task: int
    worker: int
    output_size: int


@dataclass(frozen=True, slots=True)
class WorkerJoined:
    worker: WorkerDescriptor


@dataclass(frozen=True, slots=True)
class WorkerLeft:
    worker: int


@dataclass(frozen=True, slots=True)
class StealFailed:
    graph_id: int
    task: int


SchedulerEvent = Union[GraphSubmitted, TaskFinished, WorkerJoined, WorkerLeft, StealFailed]


@dataclass(frozen=True, slots=True)
class Assignment:
    """Run ``task`` on ``worker``; higher priority runs first."""

    graph_id: int
    task: int
    worker: int
    priority: int = 0


@dataclass(frozen=True, slots=True)
class Retraction:
    """Ask ``from_worker`` to give the queued task back so it can move."""

    graph_id: int
    task: int
    from_worker: int
    to_worker: int


@dataclass(frozen=True, slots=True)
class SchedulerUpdate:
    assignments: tuple[Assignment, ...] = ()
    retractions: tuple[Retraction, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.assignments or self.retractions)


class Scheduler:
    """One sequential decision engine, driven by ordered event batches.

    ``step`` must leave every task that is ready (all inputs finished)
    with exactly one current assignment whenever at least one worker is
    live; a policy may also assign tasks before they become ready. The
    reactor delivers events in causal order and applies updates in the
    order they are returned.
    """

    name: str = "base"

    def step(self, events: Sequence[SchedulerEvent]) -> SchedulerUpdate:
        raise NotImplementedError

    def debug_check(self) -> list[str]:
        """Internal invariant sweep used by integration audits."""
        return []
