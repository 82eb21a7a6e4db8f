"""Brute-force reference evaluation, independent of the plan and its views."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .engine import UpdateEvent
from .query import Query


@dataclass
class OracleState:
    """Relation contents as plain sets, mirroring an update stream."""

    query: Query
    relations: dict[str, set[tuple]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for r in self.query.relations:
            self.relations.setdefault(r.name, set())

    def apply(self, event: UpdateEvent) -> bool:
        """Apply to one physical relation; returns whether anything changed."""
        rel = self.relations[event.relation]
        schema = self.query.relation(event.relation)
        t = tuple(event.values)
        if not schema.accepts(t):
            return False
        if event.sign > 0:
            if t in rel:
                return False
            rel.add(t)
        else:
            if t not in rel:
                return False
            rel.discard(t)
        return True

    def size(self) -> int:
        return sum(len(r) for r in self.relations.values())


def full_join(query: Query, relations: dict[str, set[tuple]]) -> Iterator[tuple[dict, list[tuple]]]:
    """Every consistent binding of all attributes, with the tuple chosen per relation.

    Plain backtracking over relations in query order. Null values never
    match anything, so an attribute bound to None cannot be shared.
    """
    rels = list(query.relations)

    def walk(i: int, binding: dict, chosen: list) -> Iterator[tuple[dict, list]]:
        if i == len(rels):
            yield binding, chosen
            return
        schema = rels[i]
        for t in relations.get(schema.name, ()):
            ok = True
            added = []
            for a, v in zip(schema.attrs, t):
                if a in binding:
                    if v is None or binding[a] is None or binding[a] != v:
                        ok = False
                        break
                else:
                    binding[a] = v
                    added.append(a)
            if ok:
                chosen.append(t)
                yield from walk(i + 1, binding, chosen)
                chosen.pop()
            for a in added:
                del binding[a]

    yield from walk(0, {}, [])


def oracle_query(state: OracleState, query: Query | None = None, output: Iterable[str] | None = None) -> set[tuple]:
    q = query or state.query
    out = tuple(output) if output is not None else q.output
    return {tuple(b[a] for a in out) for b, _ in full_join(q, state.relations)}


def oracle_delta(state: OracleState, event: UpdateEvent, query: Query | None = None) -> tuple[int, set[tuple]]:
    """Apply ``event`` to the oracle and return (sign, changed results)."""
    before = oracle_query(state, query)
    state.apply(event)
    after = oracle_query(state, query)
    if event.sign > 0:
        return 1, after - before
    return -1, before - after


def oracle_group_totals(state: OracleState, ring, weight) -> dict[tuple, object]:
    """Ring aggregate per output group; ``weight(relation, tuple)`` annotates base tuples."""
    q = state.query
    totals: dict[tuple, object] = {}
    for binding, chosen in full_join(q, state.relations):
        w = ring.one
        for schema, t in zip(q.relations, chosen):
            w = ring.mul(w, weight(schema.name, t))
        g = tuple(binding[a] for a in q.output)
        totals[g] = ring.add(totals.get(g, ring.zero), w)
    return totals
