"""Join-free maintenance plan: semi-join and projection views with counters.

Every tree node e keeps
  * its base tuples with a counter: how many children currently hold the
    tuple's join key in their projection view,
  * the semi-join view ``vs`` (tuples whose counter equals the number of
    children),
  * the projection view ``vp`` of ``vs`` onto key(e), with derivation counts.

An input update enters at its node (R-Update), a change of ``vs`` adjusts
``vp`` (S-Update) and a key appearing in or vanishing from ``vp`` adjusts
the parent's counters (P-Update). Generalized nodes have no stored base; a
key seen from any child is tracked with its counter until it drops to zero.

Connex nodes additionally index ``vs`` projected onto their output
attributes, bucketed by key, which is what the enumeration cursors walk.
For deletions those buckets keep their entries until :meth:`finalize`, so
the deletion delta can still be enumerated against the old state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import EngineBusy, UnknownRelation
from .jointree import JoinTree, TreeNode
from .query import Query

INSERT = 1
DELETE = -1


@dataclass(frozen=True)
class UpdateEvent:
    relation: str
    values: tuple
    sign: int = INSERT
    timestamp: int | None = None
    annotation: Any = None

    @property
    def is_insert(self) -> bool:
        return self.sign > 0


def insert(relation: str, *values: Any, timestamp: int | None = None) -> UpdateEvent:
    return UpdateEvent(relation, tuple(values), INSERT, timestamp)


def delete(relation: str, *values: Any, timestamp: int | None = None) -> UpdateEvent:
    return UpdateEvent(relation, tuple(values), DELETE, timestamp)


@dataclass
class PropagationRecord:
    """Membership changes caused by one update, per node id, in the order they happened."""

    event: UpdateEvent
    ignored: bool = False
    reason: str = ""
    vs: dict[int, list[tuple]] = field(default_factory=dict)
    vp: dict[int, list[tuple]] = field(default_factory=dict)
    proj: dict[int, list[tuple]] = field(default_factory=dict)
    counter_changes: int = 0
    epoch: int = 0

    @property
    def sign(self) -> int:
        return self.event.sign


def _projector(positions: tuple[int, ...]):
    if len(positions) == 0:
        return lambda t: ()
    if len(positions) == 1:
        p = positions[0]
        return lambda t: (t[p],)
    return lambda t: tuple(t[i] for i in positions)


class NodeState:
    """Storage for one tree node."""

    __slots__ = (
        "id", "tree_node", "is_input", "attrs", "parent", "slot", "children", "nchildren",
        "key_of", "child_key_of", "base", "vs", "child_index", "vp", "connex",
        "connex_children", "y_of", "ykey_of", "yslots", "key_out", "yproj", "by_key",
        "has_live", "live", "live_index", "child_key_in_y", "depth",
    )

    def __init__(self, tn: TreeNode) -> None:
        self.id = tn.id
        self.tree_node = tn
        self.is_input = tn.is_input
        self.attrs = tn.attrs
        self.parent: NodeState | None = None
        self.slot = -1  # position among the parent's children
        self.children: list[NodeState] = []
        self.nchildren = 0
        self.base: dict[tuple, int] = {}
        self.vs: dict[tuple, None] = {}
        self.child_index: list[dict[tuple, dict[tuple, None]]] = []
        self.vp: dict[tuple, int] = {}
        self.connex = tn.in_connex
        self.connex_children: list[NodeState] = []
        self.yproj: dict[tuple, int] = {}
        self.by_key: dict[tuple, dict[tuple, None]] = {}
        self.has_live = False
        self.live: dict[tuple, None] = {}
        self.live_index: list[dict[tuple, dict[tuple, None]]] = []
        self.depth = 0

    def __repr__(self) -> str:
        return f"NodeState({self.tree_node.label})"


class ViewEngine:
    """Maintains the plan for one query and join tree.

    With ``track_deltas`` (the default) every update must be completed by
    the enumeration module (delta batch consumed, live views updated) or by
    :meth:`finalize`; otherwise the engine only maintains views and
    finalizes each update immediately.
    """

    def __init__(self, query: Query, tree: JoinTree, track_deltas: bool = True) -> None:
        self.query = query
        self.tree = tree
        self.track_deltas = track_deltas
        self.output = query.output
        self.nodes: list[NodeState] = [NodeState(n) for n in tree.nodes]
        self.root = self.nodes[tree.root]
        self.by_relation: dict[str, NodeState] = {}
        self.schema = {r.name: r for r in query.relations}
        self._build()
        self.epoch = 0
        self.pending: PropagationRecord | None = None
        self._bucket_removals: list[tuple[NodeState, tuple]] = []
        self._rec: PropagationRecord | None = None
        self.counter_changes = 0
        self.ignored = 0

    # construction -------------------------------------------------------
    def _build(self) -> None:
        y = set(self.output)
        out_pos = {a: i for i, a in enumerate(self.output)}
        for st in self.nodes:
            tn = st.tree_node
            pos = {a: i for i, a in enumerate(st.attrs)}
            if tn.parent is not None:
                st.parent = self.nodes[tn.parent]
            st.children = [self.nodes[c] for c in tn.children]
            st.nchildren = len(st.children)
            st.key_of = _projector(tuple(pos[a] for a in tn.key))
            st.child_key_of = [_projector(tuple(pos[a] for a in c.tree_node.key)) for c in st.children]
            for i, c in enumerate(st.children):
                c.slot = i
            st.child_index = [{} for _ in st.children] if st.is_input else []
            yattrs = tuple(a for a in st.attrs if a in y)
            st.y_of = _projector(tuple(pos[a] for a in yattrs))
            st.yslots = tuple(out_pos[a] for a in yattrs)
            ypos = {a: i for i, a in enumerate(yattrs)}
            if st.connex:
                st.ykey_of = _projector(tuple(ypos[a] for a in tn.key))
                st.key_out = tuple(out_pos[a] for a in tn.key)
            if tn.relation is not None:
                self.by_relation[tn.relation] = st
        for st in self.nodes:
            st.connex_children = [c for c in st.children if c.connex]
            st.child_key_in_y = [
                _projector(tuple(st.yslots.index(out_pos[a]) for a in c.tree_node.key))
                if st.connex and c.connex
                else None
                for c in st.children
            ]
            st.has_live = st.connex and (st.parent is None or bool(st.children))
            st.live_index = [{} for _ in st.children]
        for i in self.tree.preorder():
            st = self.nodes[i]
            st.depth = 0 if st.parent is None else st.parent.depth + 1

    # update entry -------------------------------------------------------
    def apply(self, event: UpdateEvent) -> PropagationRecord:
        """Propagate one update through the plan and record what changed."""
        if self.pending is not None:
            raise EngineBusy("finalize the previous update first")
        st = self.by_relation.get(event.relation)
        if st is None:
            raise UnknownRelation(event.relation)
        values = tuple(event.values)
        if len(values) != len(st.attrs):
            raise ValueError(f"{event.relation} expects {len(st.attrs)} values, got {len(values)}")
        rec = PropagationRecord(event)
        self._rec = rec
        self.epoch += 1
        rec.epoch = self.epoch
        if not self.schema[event.relation].accepts(values):
            return self._ignore(rec, "filtered")
        if event.sign > 0:
            if values in st.base:
                return self._ignore(rec, "present")
            self._r_insert(st, values, event)
        else:
            if values not in st.base:
                return self._ignore(rec, "absent")
            self._r_delete(st, values)
        self.counter_changes += rec.counter_changes
        self._rec = None
        if self.track_deltas:
            self.pending = rec
        else:
            self._apply_bucket_removals()
        return rec

    def _ignore(self, rec: PropagationRecord, reason: str) -> PropagationRecord:
        rec.ignored = True
        rec.reason = reason
        self.ignored += 1
        self._rec = None
        return rec

    def finalize(self) -> None:
        """Complete a pending update: drop deleted entries from the enumeration indexes."""
        self._apply_bucket_removals()
        self.pending = None
        self.epoch += 1

    def _apply_bucket_removals(self) -> None:
        for st, yt in self._bucket_removals:
            if yt not in st.yproj:
                k = st.ykey_of(yt)
                bucket = st.by_key.get(k)
                if bucket is not None:
                    bucket.pop(yt, None)
                    if not bucket:
                        del st.by_key[k]
        self._bucket_removals.clear()

    # Alg. R-Update ------------------------------------------------------
    def _r_insert(self, st: NodeState, t: tuple, event: UpdateEvent) -> None:
        cnt = 0
        for i, c in enumerate(st.children):
            k = st.child_key_of[i](t)
            bucket = st.child_index[i].get(k)
            if bucket is None:
                st.child_index[i][k] = {t: None}
            else:
                bucket[t] = None
            if k in c.vp:
                cnt += 1
        self._rec.counter_changes += cnt
        st.base[t] = cnt
        self._on_base_insert(st, t, event)
        if cnt == st.nchildren:
            self._vs_insert(st, t)

    def _r_delete(self, st: NodeState, t: tuple) -> None:
        if st.base[t] == st.nchildren:
            self._vs_delete(st, t)
        del st.base[t]
        for i in range(st.nchildren):
            k = st.child_key_of[i](t)
            bucket = st.child_index[i][k]
            del bucket[t]
            if not bucket:
                del st.child_index[i][k]
        self._on_base_delete(st, t)

    # Alg. S-Update ------------------------------------------------------
    def _vs_insert(self, st: NodeState, t: tuple) -> None:
        rec = self._rec
        st.vs[t] = None
        rec.vs.setdefault(st.id, []).append(t)
        if st.connex:
            yt = st.y_of(t)
            c = st.yproj.get(yt, 0)
            st.yproj[yt] = c + 1
            if c == 0:
                k = st.ykey_of(yt)
                bucket = st.by_key.get(k)
                if bucket is None:
                    st.by_key[k] = {yt: None}
                else:
                    bucket[yt] = None
                rec.proj.setdefault(st.id, []).append(yt)
        self._on_vs_insert(st, t)
        p = st.parent
        if p is None:
            return
        k = st.key_of(t)
        if None in k:
            return  # nulls never join
        c = st.vp.get(k, 0)
        st.vp[k] = c + 1
        rec.counter_changes += 1
        if c == 0:
            rec.vp.setdefault(st.id, []).append(k)
            self._p_update(p, st.slot, k, 1)
        else:
            self._on_vp_value_change(st, k)

    def _vs_delete(self, st: NodeState, t: tuple) -> None:
        rec = self._rec
        del st.vs[t]
        rec.vs.setdefault(st.id, []).append(t)
        if st.connex:
            yt = st.y_of(t)
            c = st.yproj[yt]
            if c == 1:
                del st.yproj[yt]
                rec.proj.setdefault(st.id, []).append(yt)
                self._bucket_removals.append((st, yt))
            else:
                st.yproj[yt] = c - 1
        self._on_vs_delete(st, t)
        p = st.parent
        if p is None:
            return
        k = st.key_of(t)
        if None in k:
            return
        c = st.vp[k]
        rec.counter_changes += 1
        if c == 1:
            del st.vp[k]
            rec.vp.setdefault(st.id, []).append(k)
            self._on_vp_vanish(st, k)
            self._p_update(p, st.slot, k, -1)
        else:
            st.vp[k] = c - 1
            self._on_vp_value_change(st, k)

    # Alg. P-Update ------------------------------------------------------
    def _p_update(self, st: NodeState, slot: int, k: tuple, sign: int) -> None:
        rec = self._rec
        full = st.nchildren
        if st.is_input:
            matches = st.child_index[slot].get(k)
            if not matches:
                return
            base = st.base
            for t in matches:
                cnt = base[t] + sign
                base[t] = cnt
                rec.counter_changes += 1
                if sign > 0:
                    if cnt == full:
                        self._vs_insert(st, t)
                elif cnt == full - 1:
                    self._vs_delete(st, t)
        else:
            # a child's key is a full tuple of this generalized node
            cnt = st.base.get(k, 0) + sign
            rec.counter_changes += 1
            if cnt:
                st.base[k] = cnt
            else:
                del st.base[k]
            if sign > 0:
                if cnt == full:
                    self._vs_insert(st, k)
            elif cnt == full - 1:
                self._vs_delete(st, k)

    # hooks for the annotated engine ---------------------------------------
    def _on_base_insert(self, st: NodeState, t: tuple, event: UpdateEvent) -> None:
        pass

    def _on_base_delete(self, st: NodeState, t: tuple) -> None:
        pass

    def _on_vs_insert(self, st: NodeState, t: tuple) -> None:
        pass

    def _on_vs_delete(self, st: NodeState, t: tuple) -> None:
        pass

    def _on_vp_value_change(self, st: NodeState, k: tuple) -> None:
        pass

    def _on_vp_vanish(self, st: NodeState, k: tuple) -> None:
        pass

    # inspection ---------------------------------------------------------
    def node(self, label: str) -> NodeState:
        return self.nodes[self.tree.by_label(label).id]

    def view_sizes(self) -> dict[str, tuple[int, int, int, int]]:
        """Per node label: (|base|, |vs|, |vp|, |live|).

        A generalized node's base is its count map (keys with a nonzero count).
        """
        out = {}
        for st in self.nodes:
            out[st.tree_node.label] = (len(st.base), len(st.vs), len(st.vp), len(st.live))
        return out

    def space_ratio_ok(self, factor: int = 3) -> bool:
        sizes = self.view_sizes().values()
        views = sum(s[1] + s[2] + s[3] for s in sizes)
        return views <= factor * sum(s[0] for s in sizes)

    def counter_change_total(self) -> int:
        return self.counter_changes

    def relation_contents(self) -> dict[str, set[tuple]]:
        return {name: set(st.base) for name, st in self.by_relation.items()}

    def snapshot(self) -> dict:
        """Plain-data copy of all node state, for determinism and audit checks."""
        return {
            st.tree_node.label: {
                "base": dict(st.base),
                "vs": list(st.vs),
                "vp": dict(st.vp),
                "live": list(st.live),
                "yproj": dict(st.yproj),
            }
            for st in self.nodes
        }

    def audit(self) -> list[str]:
        """Recompute counters and derived views from scratch; return inconsistencies."""
        problems = []
        for st in self.nodes:
            label = st.tree_node.label
            for t, cnt in st.base.items():
                want = sum(1 for i, c in enumerate(st.children) if st.child_key_of[i](t) in c.vp)
                if cnt != want:
                    problems.append(f"{label}: counter of {t} is {cnt}, expected {want}")
            vs = {t for t, cnt in st.base.items() if cnt == st.nchildren}
            if vs != set(st.vs):
                problems.append(f"{label}: semi-join view out of sync")
            if st.parent is not None:
                vp: dict[tuple, int] = {}
                for t in st.vs:
                    k = st.key_of(t)
                    if None not in k:
                        vp[k] = vp.get(k, 0) + 1
                if vp != st.vp:
                    problems.append(f"{label}: projection counts out of sync")
            if st.connex:
                yp: dict[tuple, int] = {}
                for t in st.vs:
                    yt = st.y_of(t)
                    yp[yt] = yp.get(yt, 0) + 1
                if yp != st.yproj:
                    problems.append(f"{label}: output projection out of sync")
                if self.pending is None:
                    flat = {yt for b in st.by_key.values() for yt in b}
                    if flat != set(yp):
                        problems.append(f"{label}: enumeration buckets out of sync")
        return problems


def load(engine: ViewEngine, events: Iterable[UpdateEvent]) -> None:
    """Apply events without consuming deltas (initial bulk load)."""
    for ev in events:
        rec = engine.apply(ev)
        if engine.pending is not None:
            from .enumeration import complete

            complete(engine, rec)
