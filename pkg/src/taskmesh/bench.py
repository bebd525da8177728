"""End-to-end benchmark orchestration and metric reporting.

Each repetition launches a fresh server plus worker processes, submits
the graph through the client SDK, records the client-measured makespan,
and tears the whole cluster down, so repetitions never share state. The
per-task overhead figure is the makespan divided by the task count.
Results accumulate in a CSV (one row per execution, timeouts included as
censored rows); ``summarize`` turns rows into per-graph speedups against
a baseline configuration and their geometric mean.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import selectors
import shlex
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .benchgen import parse_family_spec
from .client import Client, GatherTimeout
from .graphio import load_graph
from .model import TaskGraph, validate_graph

log = logging.getLogger("taskmesh.bench")

MODE_NORMAL = "NORMAL"
MODE_ZERO = "ZERO"
DEFAULT_TIMEOUT = 300.0
SPAWN_TIMEOUT = 60.0


class MissingBaseline(Exception):
    """The baseline configuration has no rows for a compared graph."""


class SpawnError(Exception):
    """A cluster process failed to come up."""


@dataclass(slots=True)
class BenchRecord:
    graph_name: str
    scheduler: str
    workers: int
    nodes: int
    mode: str
    duration_scale: float
    repetition: int
    makespan: float
    aot: float
    task_count: int
    timed_out: bool = False

    @property
    def label(self) -> str:
        return self.scheduler + ("+zero" if self.mode == MODE_ZERO else "")


CSV_FIELDS = [f.name for f in fields(BenchRecord)]


def write_records(path: str | Path, records: list[BenchRecord], append: bool = False) -> None:
    path = Path(path)
    fresh = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if fresh:
            writer.writeheader()
        for rec in records:
            writer.writerow(asdict(rec))


def read_records(path: str | Path) -> list[BenchRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                BenchRecord(
                    graph_name=row["graph_name"],
                    scheduler=row["scheduler"],
                    workers=int(row["workers"]),
                    nodes=int(row["nodes"]),
                    mode=row["mode"],
                    duration_scale=float(row["duration_scale"]),
                    repetition=int(row["repetition"]),
                    makespan=float(row["makespan"]),
                    aot=float(row["aot"]),
                    task_count=int(row["task_count"]),
                    timed_out=row["timed_out"] in ("True", "true", "1"),
                )
            )
    return records


@dataclass(frozen=True, slots=True)
class ComparisonSummary:
    baseline: str
    speedups: dict[tuple[str, str], float]
    geomeans: dict[str, float]


def summarize(records: list[BenchRecord], baseline: str) -> ComparisonSummary:
    """Per-graph speedups (baseline mean makespan / candidate mean) and
    their geometric mean per configuration label."""
    means: dict[tuple[str, str], float] = {}
    groups: dict[tuple[str, str], list[float]] = {}
    for rec in records:
        if rec.timed_out:
            continue
        groups.setdefault((rec.graph_name, rec.label), []).append(rec.makespan)
    for key, values in groups.items():
        means[key] = sum(values) / len(values)
    graphs = sorted({graph for graph, _ in means})
    labels = sorted({label for _, label in means})
    if baseline not in labels:
        raise MissingBaseline(f"no rows for baseline {baseline!r}")
    speedups: dict[tuple[str, str], float] = {}
    per_label: dict[str, list[float]] = {label: [] for label in labels}
    for graph in graphs:
        base = means.get((graph, baseline))
        if base is None:
            raise MissingBaseline(f"baseline {baseline!r} missing for graph {graph!r}")
        for label in labels:
            mean = means.get((graph, label))
            if mean is None:
                continue
            ratio = base / mean
            speedups[(graph, label)] = ratio
            per_label[label].append(ratio)
    geomeans = {
        label: math.prod(values) ** (1.0 / len(values))
        for label, values in per_label.items()
        if values
    }
    return ComparisonSummary(baseline=baseline, speedups=speedups, geomeans=geomeans)


def resolve_graph(source: str | TaskGraph, name: str | None = None) -> tuple[str, TaskGraph]:
    if isinstance(source, TaskGraph):
        return name or "graph", source
    if os.path.exists(source):
        return name or Path(source).stem, load_graph(source)
    label, graph = parse_family_spec(source)
    return name or label, graph


class _Proc:
    """A supervised child process with line-buffered stdout scanning."""

    def __init__(self, cmd: list[str]):
        self.cmd = cmd
        self.proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=None)
        self.lines: list[str] = []
        self._buffer = b""
        os.set_blocking(self.proc.stdout.fileno(), False)

    def _pump(self) -> None:
        try:
            chunk = self.proc.stdout.read()
        except (OSError, ValueError):
            chunk = None
        if chunk:
            self._buffer += chunk
            while b"\n" in self._buffer:
                raw, self._buffer = self._buffer.split(b"\n", 1)
                self.lines.append(raw.decode(errors="replace"))

    def wait_for_line(self, prefix: str, timeout: float = SPAWN_TIMEOUT) -> str:
        deadline = time.monotonic() + timeout
        scanned = 0
        sel = selectors.DefaultSelector()
        sel.register(self.proc.stdout, selectors.EVENT_READ)
        try:
            while True:
                self._pump()
                while scanned < len(self.lines):
                    line = self.lines[scanned]
                    scanned += 1
                    if line.startswith(prefix):
                        return line
                if self.proc.poll() is not None:
                    raise SpawnError(
                        f"{shlex.join(self.cmd)} exited {self.proc.returncode} "
                        f"before printing {prefix!r}"
                    )
                budget = deadline - time.monotonic()
                if budget <= 0:
                    raise SpawnError(f"{prefix!r} not seen within {timeout}s: {shlex.join(self.cmd)}")
                sel.select(min(budget, 0.2))
        finally:
            sel.close()

    def stop(self, grace: float = 5.0) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(grace)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self.proc.stdout:
            self.proc.stdout.close()


def _cli(*args: str) -> list[str]:
    return [sys.executable, "-m", "taskmesh.cli", *args]


def run_benchmark(
    graph_source: str | TaskGraph,
    scheduler: str = "workstealing",
    workers: int = 4,
    reps: int = 5,
    *,
    zero: bool = False,
    duration_scale: float = 1.0,
    worker_duration_scales: list[float] | None = None,
    nodes: int = 1,
    seed: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
    graph_name: str | None = None,
    out_csv: str | Path | None = None,
    hostfile: str | None = None,
) -> list[BenchRecord]:
    """Run one configuration ``reps`` times on freshly spawned clusters."""
    name, graph = resolve_graph(graph_source, graph_name)
    stats = validate_graph(graph)
    records = []
    for rep in range(reps):
        makespan, timed_out = _run_once(
            graph,
            scheduler=scheduler,
            workers=workers,
            zero=zero,
            duration_scale=duration_scale,
            worker_duration_scales=worker_duration_scales,
            nodes=nodes,
            seed=seed,
            timeout=timeout,
            hostfile=hostfile,
        )
        record = BenchRecord(
            graph_name=name,
            scheduler=scheduler,
            workers=workers,
            nodes=nodes,
            mode=MODE_ZERO if zero else MODE_NORMAL,
            duration_scale=duration_scale,
            repetition=rep,
            makespan=makespan,
            aot=makespan * 1000.0 / stats.task_count,
            task_count=stats.task_count,
            timed_out=timed_out,
        )
        records.append(record)
        log.info(
            "%s %s workers=%d rep=%d makespan=%.3fs aot=%.3fms%s",
            name, record.label, workers, rep, makespan, record.aot,
            " TIMEOUT" if timed_out else "",
        )
        if out_csv:
            write_records(out_csv, [record], append=True)
    return records


def _worker_cmd(
    host_prefix: list[str],
    port: int,
    index: int,
    nodes: int,
    zero: bool,
    scale: float,
) -> list[str]:
    cmd = host_prefix + _cli(
        "worker",
        "--server", f"127.0.0.1:{port}",
        "--cores", "1",
        "--node-id", f"node{index % nodes}",
        "--listen", "127.0.0.1:0",
        "--duration-scale", repr(scale),
    )
    if zero:
        cmd.append("--zero")
    return cmd


def _run_once(
    graph: TaskGraph,
    *,
    scheduler: str,
    workers: int,
    zero: bool,
    duration_scale: float,
    worker_duration_scales: list[float] | None,
    nodes: int,
    seed: int,
    timeout: float,
    hostfile: str | None,
) -> tuple[float, bool]:
    hosts = _load_hosts(hostfile, workers)
    procs: list[_Proc] = []
    client = None
    try:
        server = _Proc(
            _cli(
                "server",
                "--host", "127.0.0.1",
                "--port", "0",
                "--scheduler", scheduler,
                "--seed", str(seed),
            )
        )
        procs.append(server)
        port = int(server.wait_for_line("LISTENING ").split()[1])
        for i in range(workers):
            scale = duration_scale
            if worker_duration_scales is not None:
                scale = worker_duration_scales[i]
            procs.append(_Proc(_worker_cmd(hosts[i], port, i, nodes, zero, scale)))
        for proc in procs[1:]:
            proc.wait_for_line("READY")
        client = Client(f"127.0.0.1:{port}")
        handle = client.submit(graph)
        try:
            _, makespan = client.gather(handle, timeout=timeout)
            timed_out = False
        except GatherTimeout:
            makespan = timeout
            timed_out = True
        client.shutdown_server()
        return makespan, timed_out
    finally:
        if client is not None:
            client.close()
        for proc in reversed(procs):
            proc.stop()


def _load_hosts(hostfile: str | None, workers: int) -> list[list[str]]:
    """Launch prefixes per worker: empty for local, ssh wrapper otherwise."""
    if not hostfile:
        return [[] for _ in range(workers)]
    hosts = [line.strip() for line in Path(hostfile).read_text().splitlines() if line.strip()]
    if not hosts:
        raise SpawnError(f"hostfile {hostfile} is empty")
    return [["ssh", hosts[i % len(hosts)]] for i in range(workers)]


def scaling_sweep(
    graph_source: str | TaskGraph,
    worker_counts: list[int],
    scheduler: str = "workstealing",
    reps: int = 2,
    **kwargs,
) -> tuple[list[BenchRecord], list[tuple[int, float]]]:
    """Fixed work, growing cluster: records plus mean makespan per size."""
    records: list[BenchRecord] = []
    curve: list[tuple[int, float]] = []
    for count in worker_counts:
        rows = run_benchmark(
            graph_source, scheduler=scheduler, workers=count, reps=reps, **kwargs
        )
        records.extend(rows)
        usable = [r.makespan for r in rows if not r.timed_out]
        curve.append((count, sum(usable) / len(usable) if usable else float("nan")))
    return records, curve
