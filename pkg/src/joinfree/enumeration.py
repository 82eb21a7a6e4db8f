"""Constant-delay cursors over the plan: full results and per-update deltas.

Full enumeration walks the connex subtree top-down, taking at each node the
output projections of its semi-join view that agree with the key already
fixed by the parent. Every bucket it visits is non-empty by construction,
so the work between two results does not depend on the data size.

Delta enumeration starts from witness tuples: output projections that
entered (or left) a connex node's view during the update, where propagation
stopped and whose key joins the parent's live view as it was before the
update. From a witness the cursor climbs through the live views of its
ancestors and then fills the remaining connex subtrees with full
enumeration. Live views hold the projection of the current result onto each
connex node and are only changed after the batch has been consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .engine import NodeState, PropagationRecord, UpdateEvent, ViewEngine
from .errors import CursorInvalidated, EngineBusy


class OpCounter:
    """Counts primitive steps (bucket probes and element visits)."""

    __slots__ = ("n",)

    def __init__(self) -> None:
        self.n = 0


class ResultCursor:
    """Iterator over result tuples bound to one engine epoch.

    ``max_gap`` records the largest number of primitive steps spent between
    two consecutive results (including before the first and after the last).
    """

    def __init__(self, engine: ViewEngine, gen: Iterator[tuple], ops: OpCounter) -> None:
        self.engine = engine
        self.epoch = engine.epoch
        self._gen = gen
        self.ops = ops
        self.max_gap = 0
        self._last = 0
        self.count = 0
        self.done = False

    def __iter__(self) -> ResultCursor:
        return self

    def __next__(self) -> tuple:
        if self.engine.epoch != self.epoch:
            raise CursorInvalidated("the engine changed since the cursor was opened")
        try:
            item = next(self._gen)
        except StopIteration:
            self.done = True
            self._gap()
            raise
        self._gap()
        self.count += 1
        return item

    def _gap(self) -> None:
        gap = self.ops.n - self._last
        if gap > self.max_gap:
            self.max_gap = gap
        self._last = self.ops.n


# --------------------------------------------------------------------------
# full enumeration


def _emit_node(st: NodeState, key: tuple, out: list, ops: OpCounter) -> Iterator[None]:
    ops.n += 1
    bucket = st.by_key.get(key)
    if not bucket:
        return
    slots = st.yslots
    kids = st.connex_children
    for yt in bucket:
        ops.n += 1
        for s, v in zip(slots, yt):
            out[s] = v
        if kids:
            yield from _emit_list(kids, 0, out, ops)
        else:
            yield None


def _emit_list(nodes: list[NodeState], i: int, out: list, ops: OpCounter) -> Iterator[None]:
    st = nodes[i]
    key = tuple(out[s] for s in st.key_out)
    last = i + 1 == len(nodes)
    for _ in _emit_node(st, key, out, ops):
        if last:
            yield None
        else:
            yield from _emit_list(nodes, i + 1, out, ops)


def _project(gen: Iterator[None], out: list, keep: tuple[int, ...] | None, distinct: bool) -> Iterator[tuple]:
    seen: set[tuple] = set()
    for _ in gen:
        t = tuple(out) if keep is None else tuple(out[i] for i in keep)
        if distinct:
            if t in seen:
                continue
            seen.add(t)
        yield t


def full_enum(
    engine: ViewEngine,
    keep: tuple[int, ...] | None = None,
    distinct: bool = False,
) -> ResultCursor:
    """Cursor over the current result.

    ``keep`` selects output positions (used to hide attributes added to make
    a query free-connex); ``distinct`` then removes duplicates, which costs
    memory and breaks the constant-delay bound.
    """
    if engine.pending is not None:
        raise EngineBusy("an update is still in flight")
    ops = OpCounter()
    out: list = [None] * len(engine.output)
    gen = _emit_node(engine.root, (), out, ops)
    return ResultCursor(engine, _project(gen, out, keep, distinct), ops)


# --------------------------------------------------------------------------
# witnesses and delta enumeration


@dataclass(frozen=True)
class Witness:
    node: int
    values: tuple
    kind: str  # "root" or "midway"


def _live_has(st: NodeState, yt: tuple) -> bool:
    """Does the key of ``yt`` (a projection at ``st``) join the parent's live view?"""
    bucket = st.parent.live_index[st.slot].get(st.ykey_of(yt))
    return bool(bucket)


def find_witnesses(engine: ViewEngine, rec: PropagationRecord) -> list[Witness]:
    """Witnesses of an applied update, probing live views before they change."""
    if rec.ignored:
        return []
    out = []
    for nid, changed in rec.proj.items():
        st = engine.nodes[nid]
        if st.parent is None:
            out.extend(Witness(nid, yt, "root") for yt in changed)
            continue
        stopped = set(rec.vp.get(nid, ()))
        for yt in changed:
            if st.ykey_of(yt) in stopped:
                continue  # propagation went on to the parent
            if _live_has(st, yt):
                out.append(Witness(nid, yt, "midway"))
    return out


def _sides(engine: ViewEngine, st: NodeState) -> list[NodeState]:
    cache = engine.__dict__.setdefault("_side_cache", {})
    sides = cache.get(st.id)
    if sides is None:
        sides = list(st.connex_children)
        child, p = st, st.parent
        while p is not None:
            sides.extend(c for c in p.connex_children if c is not child)
            child, p = p, p.parent
        cache[st.id] = sides
    return sides


def _climb(st: NodeState, sides: list[NodeState], out: list, ops: OpCounter) -> Iterator[None]:
    p = st.parent
    if p is None:
        if sides:
            yield from _emit_list(sides, 0, out, ops)
        else:
            yield None
        return
    ops.n += 1
    bucket = p.live_index[st.slot].get(tuple(out[s] for s in st.key_out))
    if not bucket:
        return
    slots = p.yslots
    for yt in bucket:
        ops.n += 1
        for s, v in zip(slots, yt):
            out[s] = v
        yield from _climb(p, sides, out, ops)


class DeltaBatch:
    """Signed results of one update; iterate once, then hand to :func:`update_live_views`."""

    def __init__(self, engine: ViewEngine, rec: PropagationRecord, witnesses: list[Witness]) -> None:
        self.engine = engine
        self.record = rec
        self.sign = rec.sign
        self.witnesses = witnesses
        self.ops = OpCounter()
        self.touched: dict[int, dict[tuple, None]] = {}
        self._cursor = ResultCursor(engine, self._generate(), self.ops)
        self.exhausted = False

    @property
    def max_gap(self) -> int:
        return self._cursor.max_gap

    @property
    def count(self) -> int:
        return self._cursor.count

    def __iter__(self) -> Iterator[tuple]:
        return self._cursor

    def _generate(self) -> Iterator[tuple]:
        eng = self.engine
        out: list = [None] * len(eng.output)
        ops = self.ops
        live = [st for st in eng.nodes if st.has_live]
        touched = self.touched
        for st in live:
            touched[st.id] = {}
        for w in self.witnesses:
            st = eng.nodes[w.node]
            for s, v in zip(st.yslots, w.values):
                out[s] = v
            for _ in _climb(st, _sides(eng, st), out, ops):
                for lv in live:
                    touched[lv.id][tuple(out[s] for s in lv.yslots)] = None
                yield tuple(out)
        self.exhausted = True

    def drain(self) -> list[tuple]:
        return list(self._cursor)


def delta_enum(engine: ViewEngine, rec: PropagationRecord) -> DeltaBatch:
    """Delta cursor for an applied update (empty for ignored updates)."""
    return DeltaBatch(engine, rec, find_witnesses(engine, rec))


def _index_live(st: NodeState, u: tuple) -> None:
    st.live[u] = None
    for c in st.connex_children:
        k = st.child_key_in_y[c.slot](u)
        bucket = st.live_index[c.slot].get(k)
        if bucket is None:
            st.live_index[c.slot][k] = {u: None}
        else:
            bucket[u] = None


def _unindex_live(st: NodeState, u: tuple) -> None:
    del st.live[u]
    for c in st.connex_children:
        k = st.child_key_in_y[c.slot](u)
        bucket = st.live_index[c.slot][k]
        del bucket[u]
        if not bucket:
            del st.live_index[c.slot][k]


def update_live_views(engine: ViewEngine, batch: DeltaBatch) -> None:
    """Fold the batch into the live views and finalize the update."""
    if not batch.exhausted:
        batch.drain()
    if batch.sign > 0:
        for nid, us in batch.touched.items():
            st = engine.nodes[nid]
            for u in us:
                if u not in st.live:
                    _index_live(st, u)
        engine.finalize()
        return
    engine._apply_bucket_removals()
    for st in sorted((engine.nodes[i] for i in batch.touched), key=lambda s: s.depth):
        for u in batch.touched[st.id]:
            if u not in st.live:
                continue
            if u not in st.yproj or (st.parent is not None and not _live_has(st, u)):
                _unindex_live(st, u)
    engine.finalize()


def complete(engine: ViewEngine, rec: PropagationRecord) -> list[tuple]:
    """Enumerate the delta of an applied update, update live views, finalize."""
    if rec.ignored:
        return []
    batch = delta_enum(engine, rec)
    results = batch.drain()
    update_live_views(engine, batch)
    return results


def process(engine: ViewEngine, event: UpdateEvent) -> tuple[PropagationRecord, list[tuple]]:
    """Apply an update and return its record with the signed delta."""
    rec = engine.apply(event)
    if engine.pending is None:
        return rec, []
    return rec, complete(engine, rec)
