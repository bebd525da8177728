"""Pluggable assignment policies, isolated from all I/O.

A scheduler consumes ordered event batches and emits task-to-worker
assignments plus retraction requests. It owns a private copy of whatever
graph state it needs and shares nothing mutable with the reactor; the two
exchange only the immutable values defined in ``base``.
"""

from .base import (
    Assignment,
    GraphSubmitted,
    Retraction,
    Scheduler,
    SchedulerEvent,
    SchedulerUpdate,
    StealFailed,
    TaskFinished,
    WorkerDescriptor,
    WorkerJoined,
    WorkerLeft,
)
from .random_policy import RandomScheduler, choose_uniform
from .workstealing import WorkStealingScheduler, compute_b_levels, transfer_cost

SCHEDULER_NAMES = ("workstealing", "random")


def make_scheduler(
    name: str,
    *,
    seed: int = 0,
    same_node_factor: float = 0.1,
    donor_slack: int = 1,
) -> Scheduler:
    if name == "workstealing":
        return WorkStealingScheduler(same_node_factor=same_node_factor, donor_slack=donor_slack)
    if name == "random":
        return RandomScheduler(seed=seed)
    raise ValueError(f"unknown scheduler {name!r}; choose from {SCHEDULER_NAMES}")


__all__ = [
    "Assignment",
    "GraphSubmitted",
    "RandomScheduler",
    "Retraction",
    "SCHEDULER_NAMES",
    "Scheduler",
    "SchedulerEvent",
    "SchedulerUpdate",
    "StealFailed",
    "TaskFinished",
    "WorkStealingScheduler",
    "WorkerDescriptor",
    "WorkerJoined",
    "WorkerLeft",
    "choose_uniform",
    "compute_b_levels",
    "make_scheduler",
    "transfer_cost",
]
