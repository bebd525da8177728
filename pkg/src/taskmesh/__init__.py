"""taskmesh: a small distributed task-graph execution framework.

A central server (protocol reactor + swappable scheduler), single-slot or
multi-slot workers with peer-to-peer data exchange, a client SDK that
measures makespan, synthetic graph generators, and a benchmark harness
for quantifying per-task runtime overhead and comparing scheduling
policies.
"""

from .client import AsyncClient, Client, GatherTimeout, GraphRejected, TaskErred
from .model import (
    CycleDetected,
    DanglingReference,
    GraphError,
    GraphStats,
    PayloadError,
    PayloadKind,
    PayloadSpec,
    TaskGraph,
    TaskSpec,
    TaskState,
    execute_payload,
    validate_graph,
)
from .protocol import BlobPlaceholder, Message, Op, decode, encode
from .server import Server, ServerConfig
from .worker import Worker, WorkerConfig

__version__ = "0.1.0"

__all__ = [
    "AsyncClient",
    "BlobPlaceholder",
    "Client",
    "CycleDetected",
    "DanglingReference",
    "GatherTimeout",
    "GraphError",
    "GraphRejected",
    "GraphStats",
    "Message",
    "Op",
    "PayloadError",
    "PayloadKind",
    "PayloadSpec",
    "Server",
    "ServerConfig",
    "TaskErred",
    "TaskGraph",
    "TaskSpec",
    "TaskState",
    "Worker",
    "WorkerConfig",
    "decode",
    "encode",
    "execute_payload",
    "validate_graph",
    "__version__",
]
