"""Ring-annotated maintenance for COUNT / SUM style aggregates.

Each base tuple carries an annotation w(t). On top of the plain engine the
annotated engine keeps

  * w_s(t) for tuples of a semi-join view: w(t) times the projection
    annotations of the non-connex children it joins with,
  * w_p(k) for keys of a non-connex node's projection view: the sum of w_s
    over the tuples with that key,
  * w_a(u) for each output projection u of a connex node: the sum of w_s
    over the tuples projecting to u.

A result's annotation is the product of w_a over the connex nodes. Unlike
the membership counters, annotation changes must travel upwards whenever a
value changes, so the engine re-derives parent w_s values for those keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterator

from .engine import NodeState, UpdateEvent, ViewEngine
from .enumeration import DeltaBatch, complete, delta_enum
from .errors import NotAResult, OutputNotEmpty, RingMismatch
from .jointree import JoinTree
from .query import Query


@dataclass(frozen=True)
class Ring:
    name: str
    zero: Any
    one: Any
    add: Callable[[Any, Any], Any]
    neg: Callable[[Any], Any]
    mul: Callable[[Any, Any], Any]
    check: Callable[[Any], bool]
    exact: bool = True

    def sub(self, a: Any, b: Any) -> Any:
        return self.add(a, self.neg(b))

    def coerce(self, value: Any) -> Any:
        if not self.check(value):
            raise RingMismatch(f"{value!r} is not an element of the {self.name} ring")
        return value


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_float(v: Any) -> bool:
    return isinstance(v, float) or _is_int(v)


def _add(a, b):
    return a + b


def _mul(a, b):
    return a * b


def _neg(a):
    return -a


_MASK = (1 << 64) - 1


def _wrap64(v: int) -> int:
    v &= _MASK
    return v - (1 << 64) if v >> 63 else v


COUNTING = Ring("count", 0, 1, _add, _neg, _mul, _is_int)
SUM_INT64 = Ring(
    "sum",
    0,
    1,
    lambda a, b: _wrap64(a + b),
    lambda a: _wrap64(-a),
    lambda a, b: _wrap64(a * b),
    _is_int,
)
FLOAT = Ring("float", 0.0, 1.0, _add, _neg, _mul, _is_float, exact=False)

RINGS: dict[str, Ring] = {r.name: r for r in (COUNTING, SUM_INT64, FLOAT)}


def close(a: float, b: float, rel: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=rel)


class AnnotatedEngine(ViewEngine):
    """Plan maintenance with ring annotations alongside the counters."""

    def __init__(self, query: Query, tree: JoinTree, ring: Ring | str | None = None, track_deltas: bool = True):
        if ring is None:
            ring = query.aggregate.ring if query.aggregate else "count"
        self.ring = RINGS[ring] if isinstance(ring, str) else ring
        super().__init__(query, tree, track_deltas)
        n = len(self.nodes)
        self.w: list[dict[tuple, Any]] = [{} for _ in range(n)]
        self.ws: list[dict[tuple, Any]] = [{} for _ in range(n)]
        self.wp: list[dict[tuple, Any]] = [{} for _ in range(n)]
        self.wa: list[dict[tuple, Any]] = [{} for _ in range(n)]
        self._column: dict[str, int] = {}
        if query.aggregate is not None:
            for rel, col in query.aggregate.columns:
                self._column[rel] = query.relation(rel).attrs.index(col)
        self._plain_children = [
            [c for c in st.children if not c.connex] for st in self.nodes
        ]

    # annotation of incoming tuples ---------------------------------------
    def annotation_of(self, event: UpdateEvent) -> Any:
        if event.annotation is not None:
            return self.ring.coerce(event.annotation)
        col = self._column.get(event.relation)
        if col is None:
            return self.ring.one
        return self.ring.coerce(event.values[col])

    def _on_base_insert(self, st: NodeState, t: tuple, event: UpdateEvent) -> None:
        self.w[st.id][t] = self.annotation_of(event)

    def _on_base_delete(self, st: NodeState, t: tuple) -> None:
        del self.w[st.id][t]

    # derived annotations ---------------------------------------------------
    def _ws_value(self, st: NodeState, t: tuple) -> Any:
        r = self.ring
        v = self.w[st.id][t] if st.is_input else r.one
        for c in self._plain_children[st.id]:
            v = r.mul(v, self.wp[c.id][st.child_key_of[c.slot](t)])
        return v

    def _shift(self, st: NodeState, t: tuple, delta: Any) -> None:
        """Add ``delta`` to the sums fed by the vs tuple ``t``."""
        r = self.ring
        if st.connex:
            yt = st.y_of(t)
            wa = self.wa[st.id]
            wa[yt] = r.add(wa.get(yt, r.zero), delta)
        if st.parent is not None and not st.connex:
            k = st.key_of(t)
            if None not in k:
                wp = self.wp[st.id]
                wp[k] = r.add(wp.get(k, r.zero), delta)

    def _on_vs_insert(self, st: NodeState, t: tuple) -> None:
        v = self._ws_value(st, t)
        self.ws[st.id][t] = v
        self._shift(st, t, v)

    def _on_vs_delete(self, st: NodeState, t: tuple) -> None:
        v = self.ws[st.id].pop(t)
        self._shift(st, t, self.ring.neg(v))
        if st.connex:
            yt = st.y_of(t)
            if yt not in st.yproj:
                del self.wa[st.id][yt]

    def _on_vp_vanish(self, st: NodeState, k: tuple) -> None:
        self.wp[st.id].pop(k, None)

    def _on_vp_value_change(self, st: NodeState, k: tuple) -> None:
        """w_p of a non-connex node changed without a membership flip."""
        if st.connex:
            return
        p = st.parent
        if p.is_input:
            matches = p.child_index[st.slot].get(k, ())
        else:
            matches = (k,)
        r = self.ring
        ws = self.ws[p.id]
        for t in matches:
            if t not in p.vs:
                continue
            old = ws[t]
            new = self._ws_value(p, t)
            if new == old:
                continue
            ws[t] = new
            self._shift(p, t, r.sub(new, old))
            if p.parent is not None and not p.connex:
                pk = p.key_of(t)
                if None not in pk:
                    self._on_vp_value_change(p, pk)

    # queries ---------------------------------------------------------------
    def result_annotation(self, result: tuple) -> Any:
        r = self.ring
        v = r.one
        for st in self.nodes:
            if not st.connex:
                continue
            u = tuple(result[s] for s in st.yslots)
            if u not in st.yproj:
                raise NotAResult(result)
            v = r.mul(v, self.wa[st.id][u])
        return v

    def aggregate_scalar(self) -> Any:
        if self.output:
            raise OutputNotEmpty("scalar aggregates need an empty output")
        return self.wa[self.root.id].get((), self.ring.zero)

    def group_totals(self) -> dict[tuple, Any]:
        """Annotation of every current result (group)."""
        from .enumeration import full_enum

        return {t: self.result_annotation(t) for t in full_enum(self)}

    def annotation_state(self) -> dict:
        return {
            "w": [dict(d) for d in self.w],
            "ws": [dict(d) for d in self.ws],
            "wp": [{k: v for k, v in d.items()} for d in self.wp],
            "wa": [dict(d) for d in self.wa],
        }

    def audit_annotations(self) -> list[str]:
        """Recompute w_s, w_p and w_a from the stored w and compare."""
        r = self.ring
        problems = []
        for i in reversed(self.tree.preorder()):
            st = self.nodes[i]
            for t in st.vs:
                want = self._ws_value(st, t)
                if not _eq(r, self.ws[i][t], want):
                    problems.append(f"{st.tree_node.label}: w_s of {t}")
            if st.parent is not None and not st.connex:
                sums: dict[tuple, Any] = {}
                for t in st.vs:
                    k = st.key_of(t)
                    if None not in k:
                        sums[k] = r.add(sums.get(k, r.zero), self.ws[i][t])
                if set(sums) != set(self.wp[i]) or any(not _eq(r, sums[k], self.wp[i][k]) for k in sums):
                    problems.append(f"{st.tree_node.label}: w_p out of sync")
            if st.connex:
                sums = {}
                for t in st.vs:
                    yt = st.y_of(t)
                    sums[yt] = r.add(sums.get(yt, r.zero), self.ws[i][t])
                if set(sums) != set(self.wa[i]) or any(not _eq(r, sums[k], self.wa[i][k]) for k in sums):
                    problems.append(f"{st.tree_node.label}: w_a out of sync")
        return problems


def _eq(r: Ring, a: Any, b: Any) -> bool:
    return a == b if r.exact else close(a, b)


class AnnotatedDelta:
    """Delta batch that pairs inserted results with their annotation (None for removals)."""

    def __init__(self, engine: AnnotatedEngine, batch: DeltaBatch) -> None:
        self.engine = engine
        self.batch = batch

    def __iter__(self) -> Iterator[tuple[tuple, Any]]:
        for t in self.batch:
            yield t, (self.engine.result_annotation(t) if self.batch.sign > 0 else None)


def apply_annotated(engine: AnnotatedEngine, event: UpdateEvent, annotation: Any = None) -> AnnotatedDelta | None:
    """Apply an update with an explicit annotation; returns the delta cursor if tracked."""
    if annotation is not None:
        event = UpdateEvent(event.relation, event.values, event.sign, event.timestamp, annotation)
    rec = engine.apply(event)
    if engine.pending is None:
        return None
    return AnnotatedDelta(engine, delta_enum(engine, rec))


def process_annotated(engine: AnnotatedEngine, event: UpdateEvent) -> list[tuple]:
    rec = engine.apply(event)
    if engine.pending is None:
        return []
    return complete(engine, rec)
