"""Text formats: update streams, delta output and edge lists."""

from __future__ import annotations

import re
from typing import IO, Iterable, Iterator, Mapping

from .engine import DELETE, INSERT, UpdateEvent
from .errors import BadGraphFile

_INT = re.compile(r"^[+-]?\d+$")
NULL = "NULL"


def parse_value(text: str):
    text = text.strip()
    if text == NULL:
        return None
    if _INT.match(text):
        return int(text)
    return text


def format_value(v) -> str:
    return NULL if v is None else str(v)


def parse_events(lines: Iterable[str], arities: Mapping[str, int] | None = None) -> Iterator[UpdateEvent]:
    """Parse ``+|-,<relation>,<v1>,...,<vk>[,<timestamp>]`` lines.

    A trailing field beyond the relation's arity is the timestamp; without
    arities every field is a value.
    """
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 2 or parts[0] not in ("+", "-"):
            raise ValueError(f"line {lineno}: expected '+|-,<relation>,...', got {line!r}")
        sign = INSERT if parts[0] == "+" else DELETE
        rel = parts[1]
        fields = parts[2:]
        ts = None
        if arities is not None:
            if rel not in arities:
                raise ValueError(f"line {lineno}: unknown relation {rel!r}")
            k = arities[rel]
            if len(fields) == k + 1:
                ts = int(fields[-1])
                fields = fields[:-1]
            elif len(fields) != k:
                raise ValueError(f"line {lineno}: {rel} expects {k} values")
        yield UpdateEvent(rel, tuple(parse_value(f) for f in fields), sign, ts)


def read_events(path: str, arities: Mapping[str, int] | None = None) -> list[UpdateEvent]:
    with open(path, encoding="utf-8") as fh:
        return list(parse_events(fh, arities))


def format_event(ev: UpdateEvent) -> str:
    parts = ["+" if ev.sign > 0 else "-", ev.relation, *map(format_value, ev.values)]
    if ev.timestamp is not None:
        parts.append(str(ev.timestamp))
    return ",".join(parts)


def write_events(fh: IO[str], events: Iterable[UpdateEvent]) -> None:
    for ev in events:
        fh.write(format_event(ev) + "\n")


def format_result(sign: int, values: tuple) -> str:
    return ",".join(["+" if sign > 0 else "-", *map(format_value, values)])


def read_edges(path: str) -> list[tuple[int, int]]:
    """SNAP-style edge list: ``src dst`` per line, ``#`` comments."""
    edges = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#") or line.startswith("%"):
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) < 2:
                    raise BadGraphFile(f"{path}:{lineno}: expected 'src dst'")
                try:
                    edges.append((int(parts[0]), int(parts[1])))
                except ValueError as exc:
                    raise BadGraphFile(f"{path}:{lineno}: non-integer vertex") from exc
    except OSError as exc:
        raise BadGraphFile(str(exc)) from exc
    return edges
