"""Query catalog, trace generators and hand-built update sequences."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .engine import DELETE, INSERT, UpdateEvent, insert
from .query import Predicate, Query, RelationSchema, parse_atoms, validate
from .streams import read_edges

# --------------------------------------------------------------------------
# queries used throughout tests and the CLI


def chain_query(k: int, output: Iterable[str] | None = None) -> Query:
    """R1(x1,x2) ... Rk(xk,xk+1)."""
    atoms = " ".join(f"R{i}(x{i},x{i + 1})" for i in range(1, k + 1))
    return parse_atoms(atoms, output)


def fig1_query() -> Query:
    """Four-relation line with the last attribute projected away."""
    return chain_query(4, ["x1", "x2", "x3", "x4"])


def q1_query() -> Query:
    """Two relations joined on x2, output x2 only."""
    return parse_atoms("R1(x1,x2) R2(x2,x3)", ["x2"])


def star_relations(k: int = 4) -> str:
    letters = "BCDEFGH"
    return " ".join(f"R{i}(A,{letters[i - 1]})" for i in range(1, k + 1))


SHAPES: dict[str, Query] = {}


def _shapes() -> dict[str, Query]:
    if not SHAPES:
        SHAPES.update(
            {
                "two-projected": parse_atoms("R1(x1,x2) R2(x2,x3)", ["x1", "x2"]),
                "3hop": parse_atoms("R1(A,B) R2(B,C) R3(C,D)"),
                "4hop-full": parse_atoms("R1(A,B) R2(B,C) R3(C,D) R4(D,E)"),
                "4hop-projected": parse_atoms("R1(A,B) R2(B,C) R3(C,D) R4(D,E)", ["B", "C", "D"]),
                "star": parse_atoms(star_relations(4), ["A"]),
                "q1": q1_query(),
            }
        )
    return SHAPES


def shape(name: str) -> Query:
    return _shapes()[name]


def shape_names() -> list[str]:
    return list(_shapes())


GRAPH_KINDS = ("3hop", "4hop", "4hop-projected", "star", "chain-k")


def graph_query(kind: str, threshold: int | None = None, k: int = 3) -> Query:
    """Self-join graph queries over a logical edge relation ``G(src,dst)``.

    ``threshold`` keeps only endpoints below it on the filtered copy.
    """

    def copy(i: int, a: str, b: str, filtered: bool = False) -> RelationSchema:
        filters = (Predicate(b, "<", threshold),) if filtered and threshold is not None else ()
        return RelationSchema(f"G{i}", (a, b), filters, "G")

    if kind == "3hop":
        rels = [copy(1, "A", "B"), copy(2, "B", "C"), copy(3, "C", "D", True)]
        out = ("A", "B", "C", "D")
    elif kind == "4hop":
        rels = [copy(1, "A", "B"), copy(2, "B", "C"), copy(3, "C", "D"), copy(4, "D", "E", True)]
        out = ("A", "B", "C", "D", "E")
    elif kind == "4hop-projected":
        rels = [copy(1, "A", "B"), copy(2, "B", "C"), copy(3, "C", "D"), copy(4, "D", "E", True)]
        out = ("B", "C", "D")
    elif kind == "star":
        rels = [copy(i, "A", "BCDE"[i - 1]) for i in range(1, 5)]
        out = ("A",)
    elif kind.startswith("chain"):
        if "-" in kind and kind.split("-", 1)[1].isdigit():
            k = int(kind.split("-", 1)[1])
        names = [f"X{i}" for i in range(k + 1)]
        rels = [copy(i + 1, names[i], names[i + 1], i + 1 == k) for i in range(k)]
        out = tuple(names)
    else:
        raise ValueError(f"unknown workload kind {kind!r}")
    return validate(Query(tuple(rels), out))


def fan_out(query: Query, event: UpdateEvent) -> list[UpdateEvent]:
    """Physical updates for a logical one (every self-join copy receives it)."""
    copies = query.copies(event.relation)
    if not copies:
        return [event]
    return [
        UpdateEvent(r.name, event.values, event.sign, event.timestamp, event.annotation) for r in copies
    ]


# --------------------------------------------------------------------------
# hand-built sequences


FIG6_CONTENTS: dict[str, list[tuple[int, int]]] = {
    "R1": [(1, 2), (2, 2), (3, 3)],
    "R2": [(1, 2), (2, 2), (4, 3), (1, 1), (2, 4), (1, 4)],
    "R3": [(1, 1), (2, 5), (3, 3), (1, 2), (4, 4)],
    "R4": [(1, 1), (2, 2), (3, 3), (4, 4)],
}

FIG1C_LAYOUT = ("[x3]", [("R2", ["R1"]), ("R3", ["R4"])])


def fig6_events() -> list[UpdateEvent]:
    return [insert(rel, *t) for rel, ts in FIG6_CONTENTS.items() for t in ts]


def negative_sequence(n: int) -> list[UpdateEvent]:
    """All of [n]x[n] into R2, R3, R4, then all of [n]x[n] into R1."""
    grid = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)]
    events = [insert(rel, *t) for rel in ("R2", "R3", "R4") for t in grid]
    events += [insert("R1", *t) for t in grid]
    return [UpdateEvent(e.relation, e.values, e.sign, i + 1) for i, e in enumerate(events)]


def nested_sequence(n: int) -> list[UpdateEvent]:
    """Sequence on R1(x1,x2), R2(x2,x3) where long tuples of each relation enclose short ones.

    There are 4n long tuples per relation, inserted alternately and deleted
    in the same order (FIFO among themselves), so all of them are alive
    during a middle phase. In that phase 4n short R1 and 4n short R2 tuples
    are inserted and deleted one at a time. Long R1 tuples and short R2
    tuples share x2 = 0, long R2 and short R1 tuples share x2 = 1, so the
    short tuples flip projection keys that every long tuple of the other
    relation depends on. With R2 below R1 each long R1 tuple encloses the
    4n short R2 lifespans, and the average over all 16n tuples is n.
    """
    m = 4 * n
    ev: list[tuple[str, tuple, int]] = []
    longs = []
    for i in range(m):
        longs.append(("R1", (1000 + i, 0)))
        longs.append(("R2", (1, 1000 + i)))
    for rel, t in longs:
        ev.append((rel, t, INSERT))
    for i in range(m):
        for rel, t in (("R2", (0, 2000 + i)), ("R1", (3000 + i, 1))):
            ev.append((rel, t, INSERT))
            ev.append((rel, t, DELETE))
    for rel, t in longs:
        ev.append((rel, t, DELETE))
    return [UpdateEvent(rel, t, s, i + 1) for i, (rel, t, s) in enumerate(ev)]


# --------------------------------------------------------------------------
# random traces


def random_trace(
    query: Query,
    rng: random.Random,
    n_events: int,
    domain: int = 3,
    delete_prob: float = 0.4,
) -> list[UpdateEvent]:
    """Random inserts and deletes over a small domain so that joins collide.

    Deletions mostly target present tuples; a few are non-effective, as are
    repeated insertions.
    """
    present: dict[str, list[tuple]] = {r.logical: [] for r in query.relations}
    arity = query.logical_arities()
    names = list(present)
    out = []
    for i in range(n_events):
        rel = rng.choice(names)
        pool = present[rel]
        if pool and rng.random() < delete_prob:
            if rng.random() < 0.05:
                t = tuple(rng.randrange(domain) for _ in range(arity[rel]))
            else:
                t = pool[rng.randrange(len(pool))]
            if t in pool:
                pool.remove(t)
            out.append(UpdateEvent(rel, t, DELETE, i + 1))
        else:
            t = tuple(rng.randrange(domain) for _ in range(arity[rel]))
            if t not in pool:
                pool.append(t)
            out.append(UpdateEvent(rel, t, INSERT, i + 1))
    return out


def random_fifo_trace(query: Query, rng: random.Random, n_tuples: int, window: int, domain: int = 4) -> list[UpdateEvent]:
    """Sliding-window stream: tuple i is deleted right before tuple i+window is inserted.

    The domain is widened when fewer than ``window + 1`` distinct tuples exist,
    since every live tuple must be distinct.
    """
    rels = [r.logical for r in query.relations]
    arity = query.logical_arities()
    while sum(domain ** arity[r] for r in set(rels)) <= min(window, n_tuples):
        domain += 1
    tuples = []
    live = set()
    while len(tuples) < n_tuples:
        rel = rng.choice(rels)
        t = tuple(rng.randrange(domain) for _ in range(arity[rel]))
        if (rel, t) in live:
            continue
        tuples.append((rel, t))
        live.add((rel, t))
        if len(tuples) > window:
            live.discard(tuples[len(tuples) - 1 - window])
    return window_events(tuples, window)


def window_events(items: Sequence[tuple[str, tuple]], window: float) -> list[UpdateEvent]:
    """Insert item i at time i; delete it at time i + window (deletions first on ties)."""
    events = []
    for i, (rel, t) in enumerate(items):
        events.append(UpdateEvent(rel, t, INSERT, i + 1))
        if window != math.inf and i + 1 + window <= len(items):
            events.append(UpdateEvent(rel, t, DELETE, int(i + 1 + window)))
    events.sort(key=lambda e: (e.timestamp, 0 if e.sign < 0 else 1))
    return events


def random_insertion_trace(query: Query, rng: random.Random, n_events: int, domain: int = 4) -> list[UpdateEvent]:
    rels = [r.logical for r in query.relations]
    arity = query.logical_arities()
    return [
        UpdateEvent(rel, tuple(rng.randrange(domain) for _ in range(arity[rel])), INSERT, i + 1)
        for i, rel in enumerate(rng.choice(rels) for _ in range(n_events))
    ]


# --------------------------------------------------------------------------
# graph workloads


@dataclass
class Workload:
    query: Query
    trace: list[UpdateEvent]
    mode: str = "delta"
    meta: dict = field(default_factory=dict)


def synthetic_edges(n_edges: int, n_vertices: int | None = None, seed: int = 0) -> list[tuple[int, int]]:
    rng = random.Random(seed)
    v = n_vertices or max(4, int(math.sqrt(n_edges) * 2))
    seen = set()
    edges = []
    while len(edges) < n_edges:
        e = (rng.randrange(v), rng.randrange(v))
        if e not in seen:
            seen.add(e)
            edges.append(e)
    return edges


def generate_workload(
    kind: str,
    edges: Sequence[tuple[int, int]] | str | None = None,
    window: float = math.inf,
    selectivity: float | None = None,
    n_edges: int = 1000,
    seed: int = 0,
    k: int = 3,
) -> Workload:
    """Sliding-window stream over an edge list for one of the graph queries.

    Vertices are relabelled 0..V-1 in order of first appearance; the filter
    keeps endpoints below ``ceil(selectivity * V)``.
    """
    if isinstance(edges, str):
        edges = read_edges(edges)
    elif edges is None:
        edges = synthetic_edges(n_edges, seed=seed)
    label: dict[int, int] = {}
    relabelled = []
    for s, d in edges:
        a = label.setdefault(s, len(label))
        b = label.setdefault(d, len(label))
        relabelled.append((a, b))
    threshold = None
    if selectivity is not None:
        threshold = max(1, math.ceil(selectivity * max(1, len(label))))
    query = graph_query(kind, threshold, k)
    trace = window_events([("G", e) for e in relabelled], window)
    meta = {"edges": len(relabelled), "vertices": len(label), "window": window, "threshold": threshold}
    return Workload(query, trace, "delta", meta)
