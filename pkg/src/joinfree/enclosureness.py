"""Enclosureness of update sequences.

A tuple's lifespan runs from its insertion to its deletion. The classic
measure counts, for each tuple, the largest set of pairwise disjoint
lifespans strictly inside its own; the tree-specific measure only counts
tuples of relations below the tuple's node and uses effective lifespans,
which are cut short at the first deletion (forward variant) or start late at
the last insertion (backward variant) among the node's descendants.

Intervals are closed, so two intervals are disjoint when one ends strictly
before the other starts. Unbounded ends use +/- infinity.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .engine import UpdateEvent
from .errors import UnmappedRelation
from .jointree import JoinTree

NEG_INF = -math.inf
POS_INF = math.inf


@dataclass(frozen=True)
class Lifespan:
    relation: str
    values: tuple
    start: float
    end: float
    ident: int = 0

    @property
    def interval(self) -> tuple[float, float]:
        return (self.start, self.end)


@dataclass(frozen=True)
class SequenceClass:
    fifo: bool
    insertion_only: bool
    deletion_only: bool


def timed(events: Sequence[UpdateEvent]) -> list[tuple[float, UpdateEvent]]:
    """Events with timestamps filled in (1-based position) and sorted.

    At equal timestamps deletions come first, so a window of width w holds
    exactly w tuples.
    """
    stamped = [
        (ev.timestamp if ev.timestamp is not None else i + 1, 0 if ev.sign < 0 else 1, i, ev)
        for i, ev in enumerate(events)
    ]
    stamped.sort(key=lambda x: (x[0], x[1], x[2]))
    return [(ts, ev) for ts, _, _, ev in stamped]


def lifespans(events: Sequence[UpdateEvent]) -> list[Lifespan]:
    """Pair insertions with later deletions of the same tuple.

    A deletion of a tuple never seen before belongs to an initial tuple
    (start at -inf); other deletions of absent tuples and insertions of
    present ones are not effective and are skipped.
    """
    open_: dict[tuple, float] = {}
    seen: set[tuple] = set()
    out: list[tuple] = []
    for ts, ev in timed(events):
        key = (ev.relation, tuple(ev.values))
        if ev.sign > 0:
            if key in open_:
                continue
            open_[key] = ts
            seen.add(key)
        else:
            if key in open_:
                out.append((key, open_.pop(key), ts))
            elif key not in seen:
                seen.add(key)
                out.append((key, NEG_INF, ts))
    for key, start in open_.items():
        out.append((key, start, POS_INF))
    out.sort(key=lambda x: (x[1], x[2]))
    return [Lifespan(k[0], k[1], s, e, i) for i, (k, s, e) in enumerate(out)]


def _as_lifespans(trace) -> list[Lifespan]:
    trace = list(trace)
    if trace and isinstance(trace[0], UpdateEvent):
        return lifespans(trace)
    return trace


def classify_sequence(trace) -> SequenceClass:
    trace = list(trace)
    if trace and isinstance(trace[0], UpdateEvent):
        ins_only = all(ev.sign > 0 for ev in trace)
        del_only = all(ev.sign < 0 for ev in trace)
        spans = lifespans(trace)
    else:
        spans = trace
        ins_only = all(s.end == POS_INF and s.start != NEG_INF for s in spans)
        del_only = all(s.start == NEG_INF and s.end != POS_INF for s in spans)
    return SequenceClass(is_fifo(spans), ins_only, del_only)


def is_fifo(spans: Iterable[Lifespan]) -> bool:
    """Earlier insertions are deleted earlier; two tuples that are never deleted are fine."""
    ordered = sorted(spans, key=lambda s: s.start)
    best_prev = NEG_INF
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].start == ordered[i].start:
            j += 1
        group = ordered[i:j]
        for s in group:
            if s.end != POS_INF and best_prev >= s.end:
                return False
        for s in group:
            best_prev = max(best_prev, s.end)
        i = j
    return True


# --------------------------------------------------------------------------
# interval selection


class IntervalIndex:
    """Intervals sorted by start with suffix minima of their ends.

    ``greedy(lo, hi)`` picks intervals inside [lo, hi] by earliest end,
    which is optimal when every interval belongs to a different owner.
    """

    def __init__(self, intervals: Sequence[tuple[float, float, int]]) -> None:
        self.items = sorted(intervals, key=lambda x: (x[0], x[1]))
        self.starts = [s for s, _, _ in self.items]
        n = len(self.items)
        self.best = [0] * n
        for i in range(n - 1, -1, -1):
            if i == n - 1 or self.items[i][1] <= self.items[self.best[i + 1]][1]:
                self.best[i] = i
            else:
                self.best[i] = self.best[i + 1]

    def greedy(self, lo: float, hi: float) -> list[int]:
        picks: list[int] = []
        i = bisect_left(self.starts, lo)
        n = len(self.items)
        while i < n:
            j = self.best[i]
            end = self.items[j][1]
            if end > hi:
                break
            picks.append(j)
            if end == POS_INF:
                break
            i = bisect_right(self.starts, end)
        return picks

    def inside(self, lo: float, hi: float) -> list[tuple[float, float, int]]:
        i = bisect_left(self.starts, lo)
        return [it for it in self.items[i:] if it[1] <= hi]


def _scan(cands: list[tuple[float, float, int]], skip: frozenset[int]) -> list[int]:
    """Earliest-end greedy over an end-sorted list, ignoring skipped positions."""
    picks: list[int] = []
    last = None
    for i, (s, e, _) in enumerate(cands):
        if i in skip:
            continue
        if last is None or s > last:
            picks.append(i)
            last = e
    return picks


def max_disjoint_owned(cands: Sequence[tuple[float, float, int]]) -> int:
    """Largest set of disjoint intervals using each owner at most once.

    Greedy without the owner constraint is optimal for the relaxation; when
    it uses an owner twice we branch on which of the two intervals to drop.
    The relaxed value bounds each branch, so the search is exact.
    """
    ordered = sorted(cands, key=lambda x: (x[1], x[0]))
    # feasible seed: earliest end, skipping owners already used
    used: set[int] = set()
    last = None
    for s, e, owner in ordered:
        if owner not in used and (last is None or s > last):
            used.add(owner)
            last = e
    best = len(used)
    seen: set[frozenset[int]] = set()

    def solve(skip: frozenset[int]) -> None:
        nonlocal best
        if skip in seen:
            return
        seen.add(skip)
        picks = _scan(ordered, skip)
        if len(picks) <= best:
            return
        where: dict[int, int] = {}
        for i in picks:
            owner = ordered[i][2]
            if owner in where:
                solve(skip | {where[owner]})
                solve(skip | {i})
                return
            where[owner] = i
        best = len(picks)

    solve(frozenset())
    return best


# --------------------------------------------------------------------------
# classic enclosureness


def classic_per_tuple(trace) -> list[int]:
    spans = _as_lifespans(trace)
    index = IntervalIndex([(s.start, s.end, s.ident) for s in spans])
    out = []
    for s in spans:
        picks = index.greedy(s.start, s.end)
        if any(index.items[j][0] == s.start and index.items[j][1] == s.end for j in picks):
            # the pick equals the tuple's own interval; only proper sub-intervals count
            rest = [it for it in index.inside(s.start, s.end) if (it[0], it[1]) != (s.start, s.end)]
            picks = _scan(sorted(rest, key=lambda x: (x[1], x[0])), frozenset())
        out.append(len(picks))
    return out


def floored_mean(values: Sequence[int]) -> Fraction:
    if not values:
        return Fraction(1)
    return max(Fraction(sum(values), len(values)), Fraction(1))


def classic_lambda(trace) -> Fraction:
    return floored_mean(classic_per_tuple(trace))


# --------------------------------------------------------------------------
# tree-specific enclosureness


def _node_map(spans: Sequence[Lifespan], tree: JoinTree) -> dict[int, list[Lifespan]]:
    rel_node = {n.relation: n.id for n in tree.nodes if n.is_input}
    per: dict[int, list[Lifespan]] = {n.id: [] for n in tree.nodes}
    for s in spans:
        if s.relation not in rel_node:
            raise UnmappedRelation(s.relation)
        per[rel_node[s.relation]].append(s)
    return per


def effective_lifespans(trace, tree: JoinTree) -> dict[int, tuple[tuple[float, float], tuple[float, float]]]:
    """Forward and backward effective lifespans per lifespan id."""
    spans = _as_lifespans(trace)
    per = _node_map(spans, tree)
    out = {}
    for n in tree.nodes:
        below = [s for d in tree.descendants(n.id) for s in per[d]]
        ends = sorted(s.end for s in below)
        starts = sorted(s.start for s in below)
        for s in per[n.id]:
            i = bisect_right(ends, s.start)
            fwd_end = min(s.end, ends[i]) if i < len(ends) else s.end
            j = bisect_left(starts, s.end) - 1
            bwd_start = max(s.start, starts[j]) if j >= 0 else s.start
            out[s.ident] = ((s.start, fwd_end), (bwd_start, s.end))
    return out


def tree_per_tuple(trace, tree: JoinTree) -> dict[int, int]:
    """Tree-specific enclosureness of every lifespan, keyed by lifespan id."""
    spans = _as_lifespans(trace)
    per = _node_map(spans, tree)
    eff = effective_lifespans(spans, tree)
    out: dict[int, int] = {}
    for n in tree.nodes:
        if not per[n.id]:
            continue
        cands = []
        for d in tree.descendants(n.id):
            for s in per[d]:
                fwd, bwd = eff[s.ident]
                cands.append((fwd[0], fwd[1], s.ident))
                if bwd != fwd:
                    cands.append((bwd[0], bwd[1], s.ident))
        index = IntervalIndex(cands)
        for s in per[n.id]:
            picks = index.greedy(s.start, s.end)
            owners = [index.items[j][2] for j in picks]
            if len(set(owners)) == len(owners):
                out[s.ident] = len(picks)
            else:
                out[s.ident] = max_disjoint_owned(index.inside(s.start, s.end))
    return out


def tree_lambda(trace, tree: JoinTree) -> Fraction:
    return floored_mean(list(tree_per_tuple(trace, tree).values()))


def per_relation(trace, values: dict[int, int]) -> dict[str, Fraction]:
    """Average enclosureness per relation (without the floor of 1)."""
    spans = _as_lifespans(trace)
    sums: dict[str, list[int]] = {}
    for s in spans:
        sums.setdefault(s.relation, []).append(values[s.ident])
    return {r: Fraction(sum(v), len(v)) for r, v in sums.items()}
