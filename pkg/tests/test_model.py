"""Graph validation, stats, payload execution, and lifecycle rules."""

import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmesh.benchgen import gen_layered, gen_merge, gen_tree
from taskmesh.model import (
    CycleDetected,
    DanglingReference,
    GraphError,
    PayloadError,
    PayloadKind,
    PayloadSpec,
    TaskGraph,
    TaskSpec,
    TaskState,
    execute_payload,
    is_legal_transition,
    validate_graph,
)

from .oracle import longest_path_arcs


def chain(n: int) -> TaskGraph:
    tasks = [TaskSpec(id=0)]
    for i in range(1, n):
        tasks.append(TaskSpec(id=i, inputs=(i - 1,)))
    return TaskGraph(tasks=tuple(tasks), outputs=(n - 1,))


class TestValidateGraph:
    def test_merge_10k_stats(self):
        stats = validate_graph(gen_merge(10000))
        assert stats.task_count == 10001
        assert stats.dep_count == 10000
        assert stats.longest_path == 1

    def test_tree_15_stats(self):
        stats = validate_graph(gen_tree(15))
        assert stats.task_count == 32767
        assert stats.dep_count == 32766
        assert stats.longest_path == 14

    def test_singleton(self):
        stats = validate_graph(TaskGraph(tasks=(TaskSpec(id=0),)))
        assert (stats.task_count, stats.dep_count, stats.longest_path) == (1, 0, 0)

    def test_two_cycle(self):
        graph = TaskGraph(
            tasks=(TaskSpec(id=0, inputs=(1,)), TaskSpec(id=1, inputs=(0,)))
        )
        with pytest.raises(CycleDetected):
            validate_graph(graph)

    def test_self_loop(self):
        with pytest.raises(CycleDetected):
            validate_graph(TaskGraph(tasks=(TaskSpec(id=0, inputs=(0,)),)))

    def test_dangling_input(self):
        with pytest.raises(DanglingReference):
            validate_graph(TaskGraph(tasks=(TaskSpec(id=0, inputs=(9,)),)))

    def test_dangling_output(self):
        with pytest.raises(DanglingReference):
            validate_graph(TaskGraph(tasks=(TaskSpec(id=0),), outputs=(5,)))

    def test_duplicate_task_id(self):
        with pytest.raises(GraphError):
            validate_graph(TaskGraph(tasks=(TaskSpec(id=0), TaskSpec(id=0))))

    def test_duplicate_input(self):
        graph = TaskGraph(tasks=(TaskSpec(id=0), TaskSpec(id=1, inputs=(0, 0))))
        with pytest.raises(GraphError):
            validate_graph(graph)

    def test_empty_graph(self):
        with pytest.raises(GraphError):
            validate_graph(TaskGraph(tasks=()))

    def test_idempotent(self):
        graph = gen_layered(tasks=60, deps=100, levels=5, seed=3)
        assert validate_graph(graph) == validate_graph(graph)

    def test_avg_sizes_sum_counts_as_8_bytes(self):
        graph = TaskGraph(
            tasks=(
                TaskSpec(id=0, payload=PayloadSpec(PayloadKind.CONST, output_size=1024)),
                TaskSpec(id=1, inputs=(0,), payload=PayloadSpec(PayloadKind.SUM, output_size=999)),
            )
        )
        stats = validate_graph(graph)
        assert stats.avg_output_size_kib == pytest.approx((1024 + 8) / 2 / 1024)

    def test_avg_duration(self):
        graph = TaskGraph(
            tasks=(
                TaskSpec(id=0, payload=PayloadSpec(PayloadKind.SLEEP, duration_ms=10)),
                TaskSpec(id=1, payload=PayloadSpec(PayloadKind.SLEEP, duration_ms=30)),
            )
        )
        assert validate_graph(graph).avg_duration_ms == 20.0

    def test_chain_longest_path_is_count_minus_one(self):
        stats = validate_graph(chain(17))
        assert stats.longest_path == stats.task_count - 1


@st.composite
def random_dags(draw):
    n = draw(st.integers(min_value=1, max_value=24))
    rng = random.Random(draw(st.integers(min_value=0, max_value=2**32)))
    tasks = []
    for tid in range(n):
        pool = list(range(tid))
        rng.shuffle(pool)
        inputs = tuple(sorted(pool[: rng.randrange(0, min(4, tid + 1))]))
        tasks.append(TaskSpec(id=tid, inputs=inputs))
    return TaskGraph(tasks=tuple(tasks))


@settings(max_examples=150, deadline=None)
@given(random_dags())
def test_longest_path_matches_recursive_oracle(graph):
    stats = validate_graph(graph)
    assert stats.longest_path == longest_path_arcs(graph)
    assert 0 <= stats.longest_path <= stats.task_count - 1


class TestExecutePayload:
    def test_sum_basic(self):
        spec = PayloadSpec(PayloadKind.SUM)
        three = (3).to_bytes(8, "little")
        four = (4).to_bytes(8, "little")
        assert execute_payload(spec, [three, four]) == (7).to_bytes(8, "little")

    def test_const(self):
        out = execute_payload(PayloadSpec(PayloadKind.CONST, output_size=4), [])
        assert out == bytes([0x42, 0x42, 0x42, 0x42])

    def test_sleep_output_and_delay(self):
        spec = PayloadSpec(PayloadKind.SLEEP, duration_ms=30, output_size=5)
        t0 = time.perf_counter()
        out = execute_payload(spec, [])
        elapsed = time.perf_counter() - t0
        assert out == bytes(5)
        assert elapsed >= 0.029

    def test_duration_scale(self):
        spec = PayloadSpec(PayloadKind.SLEEP, duration_ms=1000)
        t0 = time.perf_counter()
        execute_payload(spec, [], duration_scale=0.01)
        assert time.perf_counter() - t0 < 0.5

    def test_noise_deterministic_by_task_id(self):
        spec = PayloadSpec(PayloadKind.NOISE, output_size=32)
        a = execute_payload(spec, [], task_id=11)
        b = execute_payload(spec, [], task_id=11)
        c = execute_payload(spec, [], task_id=12)
        assert a == b
        assert a != c
        assert len(a) == 32

    def test_sum_no_inputs(self):
        with pytest.raises(PayloadError):
            execute_payload(PayloadSpec(PayloadKind.SUM), [])

    def test_sum_short_input(self):
        with pytest.raises(PayloadError):
            execute_payload(PayloadSpec(PayloadKind.SUM), [b"abc"])

    def test_sum_wraps_at_64_bits(self):
        big = (2**64 - 1).to_bytes(8, "little")
        one = (1).to_bytes(8, "little")
        out = execute_payload(PayloadSpec(PayloadKind.SUM), [big, one])
        assert int.from_bytes(out, "little") == 0

    def test_sum_reads_first_8_bytes_only(self):
        value = (9).to_bytes(8, "little") + b"junk-tail"
        out = execute_payload(PayloadSpec(PayloadKind.SUM), [value])
        assert int.from_bytes(out, "little") == 9

    def test_binary_tree_fold_of_ones(self):
        # 2^10 leaves of value 1 summed pairwise must reach 1024.
        values = [(1).to_bytes(8, "little")] * 1024
        spec = PayloadSpec(PayloadKind.SUM)
        while len(values) > 1:
            values = [
                execute_payload(spec, [values[i], values[i + 1]])
                for i in range(0, len(values), 2)
            ]
        assert int.from_bytes(values[0], "little") == 1024

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError):
            PayloadSpec(PayloadKind.SLEEP, duration_ms=-1)

    def test_negative_size_rejected(self):
        with pytest.raises(ValueError):
            PayloadSpec(PayloadKind.CONST, output_size=-1)


class TestLifecycle:
    def test_legal_transitions(self):
        assert is_legal_transition(TaskState.WAITING, TaskState.READY)
        assert is_legal_transition(TaskState.READY, TaskState.ASSIGNED)
        assert is_legal_transition(TaskState.ASSIGNED, TaskState.RUNNING)
        assert is_legal_transition(TaskState.ASSIGNED, TaskState.READY)
        assert is_legal_transition(TaskState.RUNNING, TaskState.FINISHED)
        assert is_legal_transition(TaskState.RUNNING, TaskState.ERROR)
        assert is_legal_transition(TaskState.ASSIGNED, TaskState.ERROR)

    def test_illegal_transitions(self):
        assert not is_legal_transition(TaskState.WAITING, TaskState.ASSIGNED)
        assert not is_legal_transition(TaskState.READY, TaskState.RUNNING)
        assert not is_legal_transition(TaskState.FINISHED, TaskState.RUNNING)
        assert not is_legal_transition(TaskState.FINISHED, TaskState.ERROR)
        assert not is_legal_transition(TaskState.ERROR, TaskState.READY)
