"""Uniform random assignment.

Every task gets a worker drawn uniformly at random the moment its graph
arrives, whether or not the task is ready; the reactor holds the wire
message until the task's inputs finish. The policy keeps no dependency
state, never retracts, and ignores finish events entirely, so its cost
per task is constant in both task and worker count.
"""

from __future__ import annotations

import random
from typing import Sequence

from .base import (
    Assignment,
    GraphSubmitted,
    Scheduler,
    SchedulerEvent,
    SchedulerUpdate,
    StealFailed,
    TaskFinished,
    WorkerJoined,
    WorkerLeft,
)


def choose_uniform(rng: random.Random, workers: Sequence[int]) -> int:
    """Pick one worker id uniformly; workers must be non-empty."""
    return workers[rng.randrange(len(workers))]


class RandomScheduler(Scheduler):
    name = "random"

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)
        # Sorted live worker ids; kept sorted so a fixed seed yields a
        # fixed assignment sequence regardless of set internals.
        self._workers: list[int] = []
        # Tasks that arrived while no worker was connected, in arrival
        # order: (graph_id, task, priority_hint).
        self._pending: list[tuple[int, int, int]] = []

    def step(self, events: Sequence[SchedulerEvent]) -> SchedulerUpdate:
        assignments: list[Assignment] = []
        for event in events:
            if isinstance(event, GraphSubmitted):
                for task in event.graph.tasks:
                    self._place(event.graph_id, task.id, task.priority_hint, assignments)
            elif isinstance(event, WorkerJoined):
                wid = event.worker.worker
                assert wid not in self._workers, f"worker {wid} joined twice"
                self._workers.append(wid)
                self._workers.sort()
                if self._pending:
                    held, self._pending = self._pending, []
                    for graph_id, task, hint in held:
                        self._place(graph_id, task, hint, assignments)
            elif isinstance(event, WorkerLeft):
                assert event.worker in self._workers, f"unknown worker {event.worker}"
                self._workers.remove(event.worker)
            elif isinstance(event, (TaskFinished, StealFailed)):
                pass  # stateless by design
            else:
                raise AssertionError(f"unknown event {event!r}")
        return SchedulerUpdate(assignments=tuple(assignments))

    def _place(self, graph_id: int, task: int, hint: int, out: list[Assignment]) -> None:
        if not self._workers:
            self._pending.append((graph_id, task, hint))
            return
        worker = choose_uniform(self._rng, self._workers)
        out.append(Assignment(graph_id=graph_id, task=task, worker=worker, priority=hint))

    def debug_check(self) -> list[str]:
        if self._pending and self._workers:
            return [f"{len(self._pending)} tasks held while workers are live"]
        return []
