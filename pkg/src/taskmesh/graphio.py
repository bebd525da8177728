"""Plain-text task graph files.

One task per line, then a final outputs line:

    task <id> deps=<comma-ids> kind=<KIND> dur_ms=<int> out_bytes=<int>
    outputs=<comma-ids>

Blank lines and ``#`` comments are ignored. The outputs line is required
and must come after every task line; empty id lists are written as an
empty value (``deps=``).
"""

from __future__ import annotations

from pathlib import Path

from .model import PayloadKind, PayloadSpec, TaskGraph, TaskSpec


class GraphFormatError(ValueError):
    """A graph file line does not match the format."""


def format_graph(graph: TaskGraph) -> str:
    lines = []
    for task in graph.tasks:
        deps = ",".join(str(i) for i in task.inputs)
        p = task.payload
        lines.append(
            f"task {task.id} deps={deps} kind={p.kind.value} "
            f"dur_ms={p.duration_ms} out_bytes={p.output_size}"
        )
    lines.append("outputs=" + ",".join(str(i) for i in graph.outputs))
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> TaskGraph:
    tasks: list[TaskSpec] = []
    outputs: tuple[int, ...] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if outputs is not None:
            raise GraphFormatError(f"line {lineno}: content after outputs line")
        if line.startswith("outputs="):
            outputs = _parse_ids(line[len("outputs=") :], lineno)
            continue
        parts = line.split()
        if parts[0] != "task" or len(parts) != 6:
            raise GraphFormatError(f"line {lineno}: expected 'task <id> deps= kind= dur_ms= out_bytes='")
        try:
            tid = int(parts[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: bad task id {parts[1]!r}") from None
        fields = {}
        for part in parts[2:]:
            key, sep, value = part.partition("=")
            if not sep:
                raise GraphFormatError(f"line {lineno}: bad field {part!r}")
            fields[key] = value
        missing = {"deps", "kind", "dur_ms", "out_bytes"} - fields.keys()
        if missing:
            raise GraphFormatError(f"line {lineno}: missing fields {sorted(missing)}")
        try:
            kind = PayloadKind(fields["kind"])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: unknown kind {fields['kind']!r}") from None
        try:
            payload = PayloadSpec(
                kind=kind,
                duration_ms=int(fields["dur_ms"]),
                output_size=int(fields["out_bytes"]),
            )
        except ValueError as exc:
            raise GraphFormatError(f"line {lineno}: {exc}") from None
        tasks.append(TaskSpec(id=tid, inputs=_parse_ids(fields["deps"], lineno), payload=payload))
    if outputs is None:
        raise GraphFormatError("missing outputs line")
    return TaskGraph(tasks=tuple(tasks), outputs=outputs)


def _parse_ids(value: str, lineno: int) -> tuple[int, ...]:
    if not value:
        return ()
    try:
        return tuple(int(item) for item in value.split(","))
    except ValueError:
        raise GraphFormatError(f"line {lineno}: bad id list {value!r}") from None


def save_graph(path: str | Path, graph: TaskGraph) -> None:
    Path(path).write_text(format_graph(graph))


def load_graph(path: str | Path) -> TaskGraph:
    return parse_graph(Path(path).read_text())
