"""Work-stealing policy: locality-driven placement plus load balancing.

A task is assigned the moment it becomes ready, to the worker with the
lowest estimated input-transfer cost. Load is deliberately not part of
the cost; imbalance is corrected afterwards by retracting queued tasks
from overloaded workers and moving them to underloaded ones. Task
priorities are critical-path depths (longest arc count from the task to
any sink) so downstream-heavy tasks run first. No duration or bandwidth
estimates are used anywhere.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from ..model import TaskGraph
from .base import (
    Assignment,
    GraphSubmitted,
    Retraction,
    Scheduler,
    SchedulerEvent,
    SchedulerUpdate,
    StealFailed,
    TaskFinished,
    TaskKey,
    WorkerJoined,
    WorkerLeft,
)

WAITING = "waiting"
READY = "ready"
ASSIGNED = "assigned"
FINISHED = "finished"
DEAD = "dead"


def compute_b_levels(graph: TaskGraph) -> dict[int, int]:
    """Longest path (arc count) from each task to any sink; sinks are 0."""
    children: dict[int, list[int]] = {t.id: [] for t in graph.tasks}
    indegree: dict[int, int] = {t.id: 0 for t in graph.tasks}
    for task in graph.tasks:
        for inp in task.inputs:
            children[inp].append(task.id)
            indegree[task.id] += 1
    order: list[int] = [tid for tid, deg in indegree.items() if deg == 0]
    cursor = 0
    while cursor < len(order):
        tid = order[cursor]
        cursor += 1
        for child in children[tid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                order.append(child)
    assert len(order) == len(children), "graph must be acyclic"
    levels: dict[int, int] = {}
    for tid in reversed(order):
        levels[tid] = max((levels[c] + 1 for c in children[tid]), default=0)
    return levels


class WorkerView:
    """The scheduler's private picture of one worker."""

    __slots__ = ("id", "node", "cores", "assigned", "owned_data", "incoming")

    def __init__(self, worker_id: int, node: str, cores: int):
        self.id = worker_id
        self.node = node
        self.cores = cores
        self.assigned: set[TaskKey] = set()
        self.owned_data: set[TaskKey] = set()
        # Data not yet local but certain to arrive: refcounted by the
        # number of assigned tasks implying each transfer.
        self.incoming: Counter[TaskKey] = Counter()

    @property
    def incoming_data(self) -> set[TaskKey]:
        return set(self.incoming)


def transfer_cost(
    inputs: Iterable[TaskKey],
    view: WorkerView,
    data_sizes: dict[TaskKey, int],
    node_owned: dict[str, Counter],
    same_node_factor: float,
) -> float:
    """Bytes-equivalent cost of running a task with ``inputs`` on ``view``.

    Free if the input is already on the worker or bound to arrive there;
    discounted by ``same_node_factor`` if a worker on the same node owns
    it; full size otherwise. Worker load is not a term.
    """
    cost = 0.0
    local_node = node_owned.get(view.node, ())
    for key in inputs:
        if key in view.owned_data or key in view.incoming:
            continue
        size = data_sizes[key]
        if key in local_node:
            cost += size * same_node_factor
        else:
            cost += size
    return cost


class _TaskEntry:
    __slots__ = (
        "graph_id",
        "task",
        "inputs",
        "consumers",
        "unfinished",
        "priority",
        "state",
        "worker",
        "migrating",
        "migrate_from",
        "pinned",
    )

    def __init__(self, graph_id: int, task: int, inputs: tuple[TaskKey, ...], priority: int):
        self.graph_id = graph_id
        self.task = task
        self.inputs = inputs
        self.consumers: list[TaskKey] = []
        self.unfinished = len(inputs)
        self.priority = priority
        self.state = WAITING
        self.worker: int | None = None
        self.migrating = False
        self.migrate_from: int | None = None
        # Set when a retraction failed: the task is known to be running
        # or done on its worker, so balancing must not pick it again.
        self.pinned = False

    @property
    def key(self) -> TaskKey:
        return (self.graph_id, self.task)


class WorkStealingScheduler(Scheduler):
    name = "workstealing"

    def __init__(self, same_node_factor: float = 0.1, donor_slack: int = 1):
        self.same_node_factor = same_node_factor
        self.donor_slack = donor_slack
        self._views: dict[int, WorkerView] = {}
        self._tasks: dict[TaskKey, _TaskEntry] = {}
        self._data_sizes: dict[TaskKey, int] = {}
        self._node_owned: dict[str, Counter] = {}
        self._held: list[TaskKey] = []

    # -- event handling -------------------------------------------------

    def step(self, events: Sequence[SchedulerEvent]) -> SchedulerUpdate:
        assignments: list[Assignment] = []
        activity = False
        for event in events:
            if isinstance(event, GraphSubmitted):
                self._add_graph(event.graph_id, event.graph, assignments)
            elif isinstance(event, TaskFinished):
                self._on_finished(event, assignments)
                activity = True
            elif isinstance(event, WorkerJoined):
                self._add_worker(event, assignments)
            elif isinstance(event, WorkerLeft):
                self._drop_worker(event.worker)
            elif isinstance(event, StealFailed):
                self._on_steal_failed(event)
                activity = True
            else:
                raise AssertionError(f"unknown event {event!r}")
        if assignments:
            activity = True
        retractions = self._balance() if activity else []
        return SchedulerUpdate(assignments=tuple(assignments), retractions=tuple(retractions))

    def _add_graph(self, graph_id: int, graph: TaskGraph, out: list[Assignment]) -> None:
        levels = compute_b_levels(graph)
        ready: list[_TaskEntry] = []
        for task in graph.tasks:
            key = (graph_id, task.id)
            assert key not in self._tasks, f"task {key} submitted twice"
            entry = _TaskEntry(
                graph_id,
                task.id,
                tuple((graph_id, i) for i in task.inputs),
                levels[task.id] + task.priority_hint,
            )
            self._tasks[key] = entry
            if entry.unfinished == 0:
                ready.append(entry)
        for task in graph.tasks:
            for inp in task.inputs:
                self._tasks[(graph_id, inp)].consumers.append((graph_id, task.id))
        ready.sort(key=lambda e: (-e.priority, e.task))
        for entry in ready:
            self._make_ready(entry, out)

    def _add_worker(self, event: WorkerJoined, out: list[Assignment]) -> None:
        desc = event.worker
        assert desc.worker not in self._views, f"worker {desc.worker} joined twice"
        self._views[desc.worker] = WorkerView(desc.worker, desc.node, desc.cores)
        if self._held:
            held, self._held = self._held, []
            for key in held:
                self._make_ready(self._tasks[key], out)

    def _drop_worker(self, worker_id: int) -> None:
        view = self._views.pop(worker_id, None)
        assert view is not None, f"unknown worker {worker_id}"
        owned = self._node_owned.get(view.node)
        if owned is not None:
            for key in view.owned_data:
                owned[key] -= 1
                if owned[key] <= 0:
                    del owned[key]
        # The reactor is authoritative about errors; here the tasks just
        # stop being schedulable.
        for key in view.assigned:
            entry = self._tasks[key]
            entry.state = DEAD
            entry.worker = None
            entry.migrating = False

    def _on_finished(self, event: TaskFinished, out: list[Assignment]) -> None:
        key = (event.graph_id, event.task)
        entry = self._tasks.get(key)
        assert entry is not None, f"finish for unknown task {key}"
        assert entry.state != FINISHED, f"task {key} finished twice"
        if entry.state == ASSIGNED and entry.worker in self._views:
            self._views[entry.worker].assigned.discard(key)
        entry.state = FINISHED
        entry.migrating = False
        self._data_sizes[key] = event.output_size
        view = self._views.get(event.worker)
        if view is not None:
            self._register_owned(view, key)
            # Running the task proves its inputs were on that worker too.
            for inp in entry.inputs:
                if view.incoming.get(inp):
                    view.incoming[inp] -= 1
                    if view.incoming[inp] <= 0:
                        del view.incoming[inp]
                self._register_owned(view, inp)
        for consumer in entry.consumers:
            centry = self._tasks[consumer]
            if centry.state != WAITING:
                continue
            centry.unfinished -= 1
            if centry.unfinished == 0:
                self._make_ready(centry, out)

    def _on_steal_failed(self, event: StealFailed) -> None:
        key = (event.graph_id, event.task)
        entry = self._tasks.get(key)
        assert entry is not None, f"steal failure for unknown task {key}"
        if entry.state in (FINISHED, DEAD):
            return
        assert entry.migrating, f"steal failure for non-migrating task {key}"
        target = self._views.get(entry.worker) if entry.worker is not None else None
        origin_id = entry.migrate_from
        if target is not None:
            target.assigned.discard(key)
            self._shift_incoming(entry, target, add=False)
        entry.migrating = False
        entry.migrate_from = None
        entry.pinned = True
        origin = self._views.get(origin_id) if origin_id is not None else None
        if origin is not None:
            origin.assigned.add(key)
            entry.worker = origin_id
            self._shift_incoming(entry, origin, add=True)
        else:
            entry.state = DEAD
            entry.worker = None

    def _register_owned(self, view: WorkerView, key: TaskKey) -> None:
        if key in view.owned_data:
            return
        view.owned_data.add(key)
        self._node_owned.setdefault(view.node, Counter())[key] += 1

    def _shift_incoming(self, entry: _TaskEntry, view: WorkerView, *, add: bool) -> None:
        for inp in entry.inputs:
            if add:
                if inp not in view.owned_data:
                    view.incoming[inp] += 1
            elif view.incoming.get(inp):
                view.incoming[inp] -= 1
                if view.incoming[inp] <= 0:
                    del view.incoming[inp]

    # -- placement ------------------------------------------------------

    def _make_ready(self, entry: _TaskEntry, out: list[Assignment]) -> None:
        if not self._views:
            entry.state = READY
            self._held.append(entry.key)
            return
        out.append(self._assign_ready(entry))

    def _assign_ready(self, entry: _TaskEntry) -> Assignment:
        """Place one ready task: minimal transfer cost, ties broken by
        fewer assigned tasks, then lower worker id."""
        best_view: WorkerView | None = None
        best_rank: tuple[float, int, int] | None = None
        for wid in sorted(self._views):
            view = self._views[wid]
            cost = transfer_cost(
                entry.inputs, view, self._data_sizes, self._node_owned, self.same_node_factor
            )
            rank = (cost, len(view.assigned), wid)
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best_view = view
        assert best_view is not None
        entry.state = ASSIGNED
        entry.worker = best_view.id
        best_view.assigned.add(entry.key)
        self._shift_incoming(entry, best_view, add=True)
        return Assignment(
            graph_id=entry.graph_id,
            task=entry.task,
            worker=best_view.id,
            priority=entry.priority,
        )

    # -- balancing ------------------------------------------------------

    def _movable(self, view: WorkerView) -> list[TaskKey]:
        return [
            key
            for key in view.assigned
            if not self._tasks[key].pinned and not self._tasks[key].migrating
        ]

    def _balance(self) -> list[Retraction]:
        """Move queued tasks from overloaded to underloaded workers.

        Underloaded: fewer assigned tasks than cores. Donor: more than
        cores + slack. Lowest-priority movable task goes to the most
        underloaded worker, recomputing after every move, until no
        (donor, underloaded) pair is left.
        """
        moves: list[Retraction] = []
        while True:
            under = [v for v in self._views.values() if len(v.assigned) < v.cores]
            if not under:
                break
            donors = [
                v
                for v in self._views.values()
                if len(v.assigned) > v.cores + self.donor_slack and self._movable(v)
            ]
            if not donors:
                break
            donor = max(donors, key=lambda v: (len(v.assigned), -v.id))
            target = max(under, key=lambda v: (v.cores - len(v.assigned), -v.id))
            key = min(self._movable(donor), key=lambda k: (self._tasks[k].priority, k))
            entry = self._tasks[key]
            donor.assigned.remove(key)
            self._shift_incoming(entry, donor, add=False)
            target.assigned.add(key)
            self._shift_incoming(entry, target, add=True)
            entry.worker = target.id
            entry.migrating = True
            entry.migrate_from = donor.id
            moves.append(
                Retraction(
                    graph_id=entry.graph_id,
                    task=entry.task,
                    from_worker=donor.id,
                    to_worker=target.id,
                )
            )
        return moves

    # -- debug ----------------------------------------------------------

    def debug_check(self) -> list[str]:
        problems: list[str] = []
        if self._views and self._held:
            problems.append(f"{len(self._held)} ready tasks held while workers are live")
        seen: Counter[TaskKey] = Counter()
        for view in self._views.values():
            seen.update(view.assigned)
        for key, count in seen.items():
            if count > 1:
                problems.append(f"task {key} assigned to {count} workers")
            if self._tasks[key].state != ASSIGNED:
                problems.append(f"task {key} in a worker view but state {self._tasks[key].state}")
        for key, entry in self._tasks.items():
            if entry.state == ASSIGNED and seen.get(key, 0) != 1:
                problems.append(f"assigned task {key} missing from worker views")
            if entry.state == WAITING and entry.unfinished == 0 and self._views:
                problems.append(f"task {key} ready but never surfaced")
        idle = [v.id for v in self._views.values() if not v.assigned]
        if idle:
            for view in self._views.values():
                if len(view.assigned) > view.cores + self.donor_slack and self._movable(view):
                    problems.append(
                        f"worker {idle[0]} idle while worker {view.id} holds "
                        f"{len(view.assigned)} movable tasks"
                    )
        return problems
