"""Independent oracles the cluster results are checked against.

Everything here evaluates graphs without touching the scheduler, server,
worker, or protocol code paths: plain sequential evaluation in
topological order, recursive longest-path measures, and a duration-
weighted critical path for makespan lower bounds.
"""

from __future__ import annotations

import sys

from taskmesh.model import TaskGraph, execute_payload


def evaluate_sequential(graph: TaskGraph) -> dict[int, bytes]:
    """Run every payload in dependency order in this process."""
    by_id = graph.task_map()
    values: dict[int, bytes] = {}
    remaining = {t.id: len(t.inputs) for t in graph.tasks}
    consumers: dict[int, list[int]] = {t.id: [] for t in graph.tasks}
    for task in graph.tasks:
        for inp in task.inputs:
            consumers[inp].append(task.id)
    frontier = [tid for tid, deg in remaining.items() if deg == 0]
    while frontier:
        tid = frontier.pop()
        task = by_id[tid]
        values[tid] = execute_payload(
            task.payload,
            [values[i] for i in task.inputs],
            task_id=tid,
            duration_scale=0.0,
        )
        for consumer in consumers[tid]:
            remaining[consumer] -= 1
            if remaining[consumer] == 0:
                frontier.append(consumer)
    assert len(values) == len(graph.tasks), "oracle requires an acyclic graph"
    return values


def gather_outputs(graph: TaskGraph) -> dict[int, bytes]:
    values = evaluate_sequential(graph)
    return {tid: values[tid] for tid in set(graph.outputs)}


def longest_path_arcs(graph: TaskGraph) -> int:
    """Longest oriented path in arcs, by memoized recursion over consumers."""
    consumers: dict[int, list[int]] = {t.id: [] for t in graph.tasks}
    for task in graph.tasks:
        for inp in task.inputs:
            consumers[inp].append(task.id)
    memo: dict[int, int] = {}
    sys.setrecursionlimit(max(10000, len(graph.tasks) * 4))

    def depth(tid: int) -> int:
        if tid not in memo:
            memo[tid] = max((depth(c) + 1 for c in consumers[tid]), default=0)
        return memo[tid]

    return max(depth(t.id) for t in graph.tasks)


def b_levels_recursive(graph: TaskGraph) -> dict[int, int]:
    """Same quantity the scheduler uses for priorities, via bare recursion."""
    consumers: dict[int, list[int]] = {t.id: [] for t in graph.tasks}
    for task in graph.tasks:
        for inp in task.inputs:
            consumers[inp].append(task.id)
    memo: dict[int, int] = {}

    def level(tid: int) -> int:
        if tid not in memo:
            memo[tid] = max((level(c) + 1 for c in consumers[tid]), default=0)
        return memo[tid]

    return {t.id: level(t.id) for t in graph.tasks}


def critical_path_ms(graph: TaskGraph) -> float:
    """Largest total duration along any dependency path."""
    consumers: dict[int, list[int]] = {t.id: [] for t in graph.tasks}
    durations = {t.id: t.payload.duration_ms for t in graph.tasks}
    for task in graph.tasks:
        for inp in task.inputs:
            consumers[inp].append(task.id)
    memo: dict[int, float] = {}

    def weight(tid: int) -> float:
        if tid not in memo:
            memo[tid] = durations[tid] + max(
                (weight(c) for c in consumers[tid]), default=0.0
            )
        return memo[tid]

    return max(weight(t.id) for t in graph.tasks)
