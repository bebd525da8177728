"""Command line entry points: server, worker, client, benchgen, bench."""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys

from . import bench as bench_mod
from . import benchgen
from .client import Client, GatherTimeout, GraphRejected, TaskErred
from .graphio import load_graph, save_graph
from .model import validate_graph
from .server import Server, ServerConfig
from .worker import Worker, WorkerConfig


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


def _addr(value: str) -> str:
    if not value.startswith("unix:") and ":" not in value:
        raise argparse.ArgumentTypeError(f"expected host:port or unix:<path>, got {value!r}")
    return value


# -- server -----------------------------------------------------------------


def server_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="taskmesh-server", description="cluster server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7421, help="0 picks a free port")
    parser.add_argument("--scheduler", choices=("workstealing", "random"), default="workstealing")
    parser.add_argument("--seed", type=int, default=0, help="random scheduler seed")
    parser.add_argument("--same-node-factor", type=float, default=0.1)
    parser.add_argument("--donor-slack", type=int, default=1)
    parser.add_argument("--trace", default=None, help="write a task event trace to this file")
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)

    config = ServerConfig(
        host=args.host,
        port=args.port,
        scheduler=args.scheduler,
        seed=args.seed,
        same_node_factor=args.same_node_factor,
        donor_slack=args.donor_slack,
        trace_path=args.trace,
    )

    async def _run() -> None:
        server = Server(config)
        await server.start()
        print(f"LISTENING {server.port}", flush=True)
        await server.stopped.wait()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass
    return 0


# -- worker -----------------------------------------------------------------


def worker_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="taskmesh-worker", description="task executor")
    parser.add_argument("--server", type=_addr, default="127.0.0.1:7421")
    parser.add_argument("--cores", type=int, default=1)
    parser.add_argument("--node-id", default="node0")
    parser.add_argument("--listen", type=_addr, default="127.0.0.1:0",
                        help="address for peer data fetches")
    parser.add_argument("--zero", action="store_true",
                        help="complete every task instantly without executing it")
    parser.add_argument("--duration-scale", type=float, default=1.0)
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)

    config = WorkerConfig(
        server=args.server,
        listen=args.listen,
        cores=args.cores,
        node_id=args.node_id,
        zero=args.zero,
        duration_scale=args.duration_scale,
    )

    async def _run() -> None:
        worker = Worker(config)
        await worker.start()
        print(f"READY {worker.worker_id} {worker.listen_address}", flush=True)
        await worker.run()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass
    return 0


# -- client -----------------------------------------------------------------


def client_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="taskmesh-client", description="submit graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    submit = sub.add_parser("submit", help="submit a graph file and wait for its outputs")
    submit.add_argument("--server", type=_addr, default="127.0.0.1:7421")
    submit.add_argument("--graph", required=True, help="graph file")
    submit.add_argument("--outputs", default=None,
                        help="comma-separated task ids; defaults to the file's outputs line")
    submit.add_argument("--timeout", type=float, default=300.0)
    submit.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)

    graph = load_graph(args.graph)
    if args.outputs is not None:
        wanted = tuple(int(x) for x in args.outputs.split(",")) if args.outputs else ()
        graph = type(graph)(tasks=graph.tasks, outputs=wanted)

    client = Client(args.server)
    try:
        handle = client.submit(graph)
        outputs, makespan = client.gather(handle, timeout=args.timeout)
    except (TaskErred, GraphRejected, GatherTimeout) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        client.close()
    print(f"makespan_s {makespan:.6f}")
    for tid in sorted(outputs):
        print(f"output {tid} bytes={len(outputs[tid])}")
    return 0


# -- benchgen -----------------------------------------------------------------


def benchgen_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="taskmesh-benchgen", description="graph generators")
    sub = parser.add_subparsers(dest="command", required=True)

    merge = sub.add_parser("merge", help="n independent tasks joined by one sink")
    merge.add_argument("--n", type=int, required=True)
    merge.add_argument("--dur-ms", type=int, default=0)
    merge.add_argument("--out-bytes", type=int, default=benchgen.MERGE_OUTPUT_BYTES)
    merge.add_argument("--sum", action="store_true", help="CONST sources with a SUM sink")
    merge.add_argument("--out", required=True)

    slow = sub.add_parser("merge_slow", help="merge with a fixed per-task duration")
    slow.add_argument("--n", type=int, required=True)
    slow.add_argument("--dur-ms", type=int, required=True)
    slow.add_argument("--out-bytes", type=int, default=benchgen.MERGE_OUTPUT_BYTES)
    slow.add_argument("--out", required=True)

    tree = sub.add_parser("tree", help="binary reduction, 2**(n-1) leaves")
    tree.add_argument("--n", type=int, required=True)
    tree.add_argument("--dur-ms", type=int, default=0)
    tree.add_argument("--out", required=True)

    layered = sub.add_parser("layered", help="seeded random DAG with a level budget")
    layered.add_argument("--tasks", type=int, required=True)
    layered.add_argument("--deps", type=int, required=True)
    layered.add_argument("--levels", type=int, required=True)
    layered.add_argument("--dur-mean", type=float, default=0.0)
    layered.add_argument("--dur-jitter", type=float, default=0.0)
    layered.add_argument("--size-mean", type=float, default=64.0)
    layered.add_argument("--size-jitter", type=float, default=0.0)
    layered.add_argument("--seed", type=int, default=0)
    layered.add_argument("--sum", action="store_true")
    layered.add_argument("--out", required=True)

    stats = sub.add_parser("stats", help="print a stats row for a graph file")
    stats.add_argument("--graph", required=True)

    args = parser.parse_args(argv)
    if args.command == "stats":
        graph = load_graph(args.graph)
        print("name\t#T\t#I\tS\tAD\tLP")
        print(validate_graph(graph).table_row(args.graph))
        return 0

    if args.command == "merge":
        graph = benchgen.gen_merge(args.n, args.dur_ms, args.out_bytes, sum_mode=args.sum)
    elif args.command == "merge_slow":
        graph = benchgen.gen_merge(args.n, args.dur_ms, args.out_bytes)
    elif args.command == "tree":
        graph = benchgen.gen_tree(args.n, args.dur_ms)
    else:
        graph = benchgen.gen_layered(
            tasks=args.tasks,
            deps=args.deps,
            levels=args.levels,
            duration_dist=(args.dur_mean, args.dur_jitter),
            size_dist=(args.size_mean, args.size_jitter),
            seed=args.seed,
            sum_mode=args.sum,
        )
    validate_graph(graph)
    save_graph(args.out, graph)
    print(f"wrote {args.out} ({len(graph.tasks)} tasks)")
    return 0


# -- bench -----------------------------------------------------------------


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="taskmesh-bench", description="benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one benchmark configuration")
    run.add_argument("--graph", required=True, help="graph file or family:params spec")
    run.add_argument("--scheduler", choices=("workstealing", "random"), default="workstealing")
    run.add_argument("--workers", type=int, default=4)
    run.add_argument("--nodes", type=int, default=1)
    run.add_argument("--reps", type=int, default=5)
    run.add_argument("--zero", action="store_true")
    run.add_argument("--duration-scale", type=float, default=1.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--timeout", type=float, default=bench_mod.DEFAULT_TIMEOUT)
    run.add_argument("--hostfile", default=None, help="launch workers over ssh on these hosts")
    run.add_argument("--out", required=True, help="CSV to append records to")
    run.add_argument("--log-level", default="info")

    summ = sub.add_parser("summarize", help="speedups against a baseline configuration")
    summ.add_argument("--csv", required=True)
    summ.add_argument("--baseline", required=True,
                      help="configuration label, e.g. workstealing or random+zero")

    sweep = sub.add_parser("sweep", help="strong scaling over worker counts")
    sweep.add_argument("--graph", required=True)
    sweep.add_argument("--workers", required=True, help="comma list, e.g. 1,2,4,8")
    sweep.add_argument("--scheduler", choices=("workstealing", "random"), default="workstealing")
    sweep.add_argument("--nodes", type=int, default=1)
    sweep.add_argument("--reps", type=int, default=2)
    sweep.add_argument("--zero", action="store_true")
    sweep.add_argument("--duration-scale", type=float, default=1.0)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--timeout", type=float, default=bench_mod.DEFAULT_TIMEOUT)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--log-level", default="info")

    args = parser.parse_args(argv)

    if args.command == "run":
        _setup_logging(args.log_level)
        bench_mod.run_benchmark(
            args.graph,
            scheduler=args.scheduler,
            workers=args.workers,
            reps=args.reps,
            zero=args.zero,
            duration_scale=args.duration_scale,
            nodes=args.nodes,
            seed=args.seed,
            timeout=args.timeout,
            hostfile=args.hostfile,
            out_csv=args.out,
        )
        print(f"appended {args.reps} records to {args.out}")
        return 0

    if args.command == "summarize":
        records = bench_mod.read_records(args.csv)
        summary = bench_mod.summarize(records, args.baseline)
        print(f"baseline {summary.baseline}")
        for (graph, label), ratio in sorted(summary.speedups.items()):
            print(f"speedup {graph} {label} {ratio:.4f}")
        for label, geomean in sorted(summary.geomeans.items()):
            print(f"geomean {label} {geomean:.4f}")
        return 0

    _setup_logging(args.log_level)
    counts = [int(x) for x in args.workers.split(",")]
    _, curve = bench_mod.scaling_sweep(
        args.graph,
        counts,
        scheduler=args.scheduler,
        reps=args.reps,
        zero=args.zero,
        duration_scale=args.duration_scale,
        nodes=args.nodes,
        seed=args.seed,
        timeout=args.timeout,
        out_csv=args.out,
    )
    for workers, mean in curve:
        print(f"workers {workers} mean_makespan_s {mean:.4f}")
    return 0


_COMMANDS = {
    "server": server_main,
    "worker": worker_main,
    "client": client_main,
    "benchgen": benchgen_main,
    "bench": bench_main,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in _COMMANDS:
        print(f"usage: python -m taskmesh.cli {{{','.join(_COMMANDS)}}} ...", file=sys.stderr)
        return 2
    return _COMMANDS[argv[0]](argv[1:])


if __name__ == "__main__":
    sys.exit(main())
