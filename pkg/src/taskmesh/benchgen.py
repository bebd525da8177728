"""Synthetic benchmark task graphs.

Three families: ``merge`` (n independent tasks joined by one sink, with a
slow variant via per-task duration), ``tree`` (pairwise reduction of a
power-of-two leaf set), and ``layered`` (a seeded random DAG shaped by a
task/dependency/level budget, standing in for the task graphs that data
frame and array pipelines produce). Generators are pure functions of
their parameters and seed; every graph they emit passes validation.
"""

from __future__ import annotations

import random

from .model import PayloadKind, PayloadSpec, TaskGraph, TaskSpec

MERGE_OUTPUT_BYTES = 28
SUM_INPUT_BYTES = 8


class InfeasibleParameters(ValueError):
    """No graph can satisfy the requested shape."""


def gen_merge(
    n: int,
    duration_ms: int = 0,
    output_size: int = MERGE_OUTPUT_BYTES,
    sum_mode: bool = False,
) -> TaskGraph:
    """n independent tasks merged by a single sink.

    With ``duration_ms == 0`` the sources are trivially short, stressing
    pure per-task overhead; a positive duration gives the slow variant.
    ``sum_mode`` swaps payloads for CONST sources and a SUM sink so the
    result is checkable against plain arithmetic.
    """
    if n < 1:
        raise InfeasibleParameters("merge needs n >= 1")
    tasks = []
    if sum_mode:
        source = PayloadSpec(PayloadKind.CONST, duration_ms=0, output_size=SUM_INPUT_BYTES)
        sink = PayloadSpec(PayloadKind.SUM, duration_ms=0)
    else:
        source = PayloadSpec(PayloadKind.SLEEP, duration_ms=duration_ms, output_size=output_size)
        sink = PayloadSpec(PayloadKind.SLEEP, duration_ms=0, output_size=output_size)
    for tid in range(n):
        tasks.append(TaskSpec(id=tid, payload=source))
    tasks.append(TaskSpec(id=n, inputs=tuple(range(n)), payload=sink))
    return TaskGraph(tasks=tuple(tasks), outputs=(n,))


def gen_tree(
    n: int,
    duration_ms: int = 0,
    output_size: int = SUM_INPUT_BYTES,
    leaf_kind: PayloadKind = PayloadKind.CONST,
) -> TaskGraph:
    """Binary reduction with 2**(n-1) leaves and 2**n - 1 tasks total.

    Leaves are CONST (or NOISE) producers; interior nodes SUM their two
    children, so the root equals the 64-bit wrap-around sum of all leaf
    values. The longest path has n - 1 arcs.
    """
    if n < 1:
        raise InfeasibleParameters("tree needs n >= 1")
    if leaf_kind not in (PayloadKind.CONST, PayloadKind.NOISE):
        raise InfeasibleParameters("tree leaves must be CONST or NOISE")
    leaf_payload = PayloadSpec(leaf_kind, output_size=max(SUM_INPUT_BYTES, output_size))
    sum_payload = PayloadSpec(PayloadKind.SUM, duration_ms=duration_ms)
    tasks = []
    level = list(range(2 ** (n - 1)))
    for tid in level:
        tasks.append(TaskSpec(id=tid, payload=leaf_payload))
    next_id = len(level)
    while len(level) > 1:
        parents = []
        for i in range(0, len(level), 2):
            tasks.append(
                TaskSpec(id=next_id, inputs=(level[i], level[i + 1]), payload=sum_payload)
            )
            parents.append(next_id)
            next_id += 1
        level = parents
    return TaskGraph(tasks=tuple(tasks), outputs=(level[0],))


def gen_layered(
    tasks: int,
    deps: int,
    levels: int,
    duration_dist: tuple[float, float] = (0.0, 0.0),
    size_dist: tuple[float, float] = (64.0, 0.0),
    seed: int = 0,
    sum_mode: bool = False,
) -> TaskGraph:
    """Seeded random DAG with exact task, dependency, and level counts.

    Tasks are spread evenly over ``levels`` layers and arcs only point
    from earlier to later layers, so the longest path is exactly
    ``levels - 1`` arcs (a spine chain guarantees it is reached). A
    single layer forces zero dependencies. ``duration_dist`` and
    ``size_dist`` are (mean, relative jitter) pairs sampled per task.
    """
    if tasks < 1:
        raise InfeasibleParameters("need at least one task")
    if levels < 1 or levels > tasks:
        raise InfeasibleParameters(f"levels must be in [1, {tasks}]")
    if levels == 1:
        deps = 0
    rng = random.Random(seed)

    base, extra = divmod(tasks, levels)
    layer_ids: list[list[int]] = []
    next_id = 0
    for layer in range(levels):
        count = base + (1 if layer < extra else 0)
        layer_ids.append(list(range(next_id, next_id + count)))
        next_id += count

    earlier_counts = []
    total = 0
    for layer in layer_ids:
        earlier_counts.append(total)
        total += len(layer)
    max_deps = sum(len(layer) * earlier_counts[i] for i, layer in enumerate(layer_ids))
    spine_len = levels - 1
    if deps < spine_len:
        raise InfeasibleParameters(f"deps must be >= {spine_len} to span {levels} levels")
    if deps > max_deps:
        raise InfeasibleParameters(f"deps must be <= {max_deps} for this layer layout")

    arcs: set[tuple[int, int]] = set()
    spine_prev = rng.choice(layer_ids[0]) if levels > 1 else None
    for layer in layer_ids[1:]:
        node = rng.choice(layer)
        arcs.add((spine_prev, node))
        spine_prev = node

    level_of = {}
    for i, layer in enumerate(layer_ids):
        for tid in layer:
            level_of[tid] = i
    later_tasks = [tid for layer in layer_ids[1:] for tid in layer]
    remaining = deps - len(arcs)
    attempts = 0
    attempt_cap = remaining * 50 + 1000
    while remaining > 0 and attempts < attempt_cap:
        attempts += 1
        consumer = rng.choice(later_tasks)
        producer_pool = earlier_counts[level_of[consumer]]
        producer = rng.randrange(producer_pool)
        if (producer, consumer) not in arcs:
            arcs.add((producer, consumer))
            remaining -= 1
    if remaining > 0:
        # Near saturation random sampling stalls; fill deterministically.
        for consumer in later_tasks:
            for producer in range(earlier_counts[level_of[consumer]]):
                if (producer, consumer) not in arcs:
                    arcs.add((producer, consumer))
                    remaining -= 1
                    if remaining == 0:
                        break
            if remaining == 0:
                break

    inputs_of: dict[int, list[int]] = {tid: [] for tid in range(tasks)}
    for producer, consumer in sorted(arcs):
        inputs_of[consumer].append(producer)

    def sample(dist: tuple[float, float]) -> int:
        mean, jitter = dist
        value = mean * (1.0 + jitter * rng.uniform(-1.0, 1.0))
        return max(0, round(value))

    specs = []
    for tid in range(tasks):
        ins = tuple(inputs_of[tid])
        if sum_mode:
            if ins:
                payload = PayloadSpec(PayloadKind.SUM, duration_ms=sample(duration_dist))
            else:
                payload = PayloadSpec(PayloadKind.CONST, output_size=SUM_INPUT_BYTES)
        else:
            payload = PayloadSpec(
                PayloadKind.SLEEP,
                duration_ms=sample(duration_dist),
                output_size=sample(size_dist),
            )
        specs.append(TaskSpec(id=tid, inputs=ins, payload=payload))

    has_consumer = {producer for producer, _ in arcs}
    sinks = tuple(tid for tid in range(tasks) if tid not in has_consumer)
    return TaskGraph(tasks=tuple(specs), outputs=sinks)


def parse_family_spec(spec: str) -> tuple[str, TaskGraph]:
    """Build a graph from ``family:key=value,...`` (e.g. ``merge:n=1000``)."""
    family, _, raw = spec.partition(":")
    params: dict[str, float] = {}
    if raw:
        for item in raw.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"bad parameter {item!r} in {spec!r}")
            params[key] = float(value)
    return spec, build_family(family, params)


def build_family(family: str, params: dict[str, float]) -> TaskGraph:
    p = dict(params)

    def take(name: str, default: float | None = None) -> float:
        if name in p:
            return p.pop(name)
        if default is None:
            raise ValueError(f"{family} requires parameter {name}")
        return default

    if family in ("merge", "merge_slow"):
        graph = gen_merge(
            n=int(take("n")),
            duration_ms=int(take("dur_ms", 0 if family == "merge" else None)),
            output_size=int(take("out_bytes", MERGE_OUTPUT_BYTES)),
            sum_mode=bool(take("sum", 0)),
        )
    elif family == "tree":
        graph = gen_tree(
            n=int(take("n")),
            duration_ms=int(take("dur_ms", 0)),
            output_size=int(take("out_bytes", SUM_INPUT_BYTES)),
        )
    elif family == "layered":
        graph = gen_layered(
            tasks=int(take("tasks")),
            deps=int(take("deps")),
            levels=int(take("levels")),
            duration_dist=(take("dur_mean", 0.0), take("dur_jitter", 0.0)),
            size_dist=(take("size_mean", 64.0), take("size_jitter", 0.0)),
            seed=int(take("seed", 0)),
            sum_mode=bool(take("sum", 0)),
        )
    else:
        raise ValueError(f"unknown graph family {family!r}")
    if p:
        raise ValueError(f"unknown parameters for {family}: {sorted(p)}")
    return graph
