"""End-to-end driver: plan selection, trace replay, verification and metrics."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

from .aggregation import AnnotatedEngine
from .engine import UpdateEvent, ViewEngine
from .enclosureness import timed
from .enumeration import complete, full_enum
from .jointree import JoinTree, choose_plan_tree, enumerate_trees
from .oracle import OracleState, oracle_group_totals, oracle_query
from .query import Query, free_connex_by_gyo, make_free_connex
from .streams import format_result, format_value
from .workloads import fan_out

VERIFY_LIMIT = 1000  # base tuples; beyond this the oracle is switched off


@dataclass
class RunOptions:
    mode: str = "delta"  # "delta", "full:<k>", "full" or "agg"
    verify: bool = False
    tree: str | int = "auto"
    prefix: int = 1000
    verify_limit: int = VERIFY_LIMIT


@dataclass
class RunReport:
    events: int = 0
    physical_updates: int = 0
    ignored: int = 0
    delta_results: int = 0
    full_enumerations: int = 0
    full_results: int = 0
    seconds: float = 0.0
    latencies_ns: list[int] = field(default_factory=list, repr=False)
    counter_changes: int = 0
    peak_views: int = 0
    peak_base: int = 0
    space_violations: int = 0
    verified: bool | None = None
    verify_failures: list[str] = field(default_factory=list)
    verify_note: str = ""
    tree: str = ""
    masked: tuple[str, ...] = ()
    aggregate: object = None

    @property
    def ok(self) -> bool:
        return not self.verify_failures

    def metrics(self) -> dict[str, object]:
        lat = self.latencies_ns or [0]
        return {
            "events": self.events,
            "physical_updates": self.physical_updates,
            "ignored": self.ignored,
            "delta_results": self.delta_results,
            "full_enumerations": self.full_enumerations,
            "full_results": self.full_results,
            "total_seconds": round(self.seconds, 6),
            "latency_mean_ns": int(statistics.fmean(lat)),
            "latency_max_ns": max(lat),
            "counter_changes": self.counter_changes,
            "peak_view_tuples": self.peak_views,
            "peak_base_tuples": self.peak_base,
            "space_violations": self.space_violations,
            "verified": "skipped" if self.verified is None else str(self.verified).lower(),
        }

    def lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in self.metrics().items()]


def update_counts(query: Query, trace: Sequence[UpdateEvent], prefix: int) -> dict[str, int]:
    counts = {r.name: 0 for r in query.relations}
    for ev in trace[:prefix]:
        for p in fan_out(query, ev):
            if p.relation in counts:
                counts[p.relation] += 1
    return counts


def pick_tree(query: Query, trace: Sequence[UpdateEvent], tree: str | int = "auto", prefix: int = 1000) -> JoinTree:
    if tree == "auto":
        counts = update_counts(query, trace, prefix) if trace else None
        return choose_plan_tree(query, counts)
    return enumerate_trees(query)[int(tree)]


def prepare(query: Query) -> tuple[Query, tuple[str, ...], tuple[int, ...] | None]:
    """Extend non-free-connex queries; returns (query, masked attrs, kept positions)."""
    if free_connex_by_gyo(query):
        return query, (), None
    extended, masked = make_free_connex(query)
    keep = tuple(i for i, a in enumerate(extended.output) if a not in masked)
    return extended, masked, keep


def run(
    query: Query,
    trace: Sequence[UpdateEvent],
    options: RunOptions | None = None,
    out: IO[str] | None = None,
    on_event: Callable[[ViewEngine, int], None] | None = None,
) -> RunReport:
    """Replay a logical trace and collect metrics; writes the delta stream to ``out``."""
    opts = options or RunOptions()
    report = RunReport()
    q, masked, keep = prepare(query)
    report.masked = masked
    tree = pick_tree(q, trace, opts.tree, opts.prefix)
    report.tree = tree.canonical()
    agg = opts.mode == "agg"
    engine: ViewEngine = AnnotatedEngine(q, tree) if agg else ViewEngine(q, tree)
    every = 0
    if opts.mode.startswith("full"):
        _, _, k = opts.mode.partition(":")
        every = int(k) if k else max(1, len(trace) // 10)
    oracle = OracleState(q) if opts.verify else None
    verifying = opts.verify
    ordered = timed(trace)

    def project(t: tuple) -> tuple:
        return t if keep is None else tuple(t[i] for i in keep)

    def fail(msg: str) -> None:
        report.verify_failures.append(msg)

    start = time.perf_counter()
    for seq, (_, logical) in enumerate(ordered, 1):
        report.events += 1
        before = oracle_query(oracle) if verifying and every == 0 else None
        t0 = time.perf_counter_ns()
        sign = logical.sign
        results: list[tuple] = []
        for ev in fan_out(q, logical):
            report.physical_updates += 1
            rec = engine.apply(ev)
            if rec.ignored:
                report.ignored += 1
                continue
            if engine.pending is not None:
                results.extend(complete(engine, rec))
        report.latencies_ns.append(time.perf_counter_ns() - t0)
        report.delta_results += len(results)
        if out is not None and every == 0:
            out.write(f"# event {seq}\n")
            for t in results:
                out.write(format_result(sign, project(t)) + "\n")
        if agg and out is not None and not q.output:
            out.write(f"# aggregate {format_value(engine.aggregate_scalar())}\n")
        sizes = engine.view_sizes().values()
        views = sum(s[1] + s[2] + s[3] for s in sizes)
        base = sum(s[0] for s in sizes)
        report.peak_views = max(report.peak_views, views)
        report.peak_base = max(report.peak_base, base)
        if views > 3 * base:
            report.space_violations += 1
        if verifying:
            for ev in fan_out(q, logical):
                oracle.apply(ev)
            if oracle.size() > opts.verify_limit:
                verifying = False
                report.verify_note = f"disabled after event {seq}: more than {opts.verify_limit} base tuples"
            elif before is not None:
                after = oracle_query(oracle)
                want = (after - before) if sign > 0 else (before - after)
                if len(results) != len(set(results)) or set(results) != want:
                    fail(f"event {seq}: delta mismatch")
            if verifying and agg:
                _check_aggregate(engine, oracle, fail, seq)
        if every and seq % every == 0:
            _full(engine, report, out, project, oracle if verifying else None, fail, seq)
        if on_event is not None:
            on_event(engine, seq)
    if every and (report.events == 0 or report.events % every != 0):
        _full(engine, report, out, project, oracle if verifying else None, fail, report.events)
    if agg and q.output and out is not None:
        for g, w in sorted(engine.group_totals().items(), key=repr):
            out.write("=," + ",".join(map(format_value, project(g))) + f",{format_value(w)}\n")
    if agg and not q.output:
        report.aggregate = engine.aggregate_scalar()
    report.seconds = time.perf_counter() - start
    report.counter_changes = engine.counter_change_total()
    if opts.verify:
        report.verified = report.ok
    return report


def _full(engine, report, out, project, oracle, fail, seq) -> None:
    report.full_enumerations += 1
    rows = list(full_enum(engine))
    report.full_results += len(rows)
    if out is not None:
        out.write(f"# full {seq} {len(rows)}\n")
        for t in rows:
            out.write(format_result(1, project(t)) + "\n")
    if oracle is not None:
        if len(rows) != len(set(rows)) or set(rows) != oracle_query(oracle):
            fail(f"event {seq}: full enumeration mismatch")


def _check_aggregate(engine: AnnotatedEngine, oracle: OracleState, fail, seq: int) -> None:
    ring = engine.ring

    def weight(rel: str, t: tuple):
        col = engine._column.get(rel)
        return ring.one if col is None else t[col]

    want = oracle_group_totals(oracle, ring, weight)
    got = engine.group_totals()
    if got != want:
        fail(f"event {seq}: aggregate mismatch")


# --------------------------------------------------------------------------
# contrast baseline


class LeftDeepBaseline:
    """Materializes every prefix join R1 ⋈ ... ⋈ Rk and counts the tuples it touches.

    This is the cost structure of classic change propagation with one
    intermediate view per join; it exists only to contrast update costs.
    """

    def __init__(self, query: Query) -> None:
        self.query = query
        self.rels = list(query.relations)
        self.data: list[set[tuple]] = [set() for _ in self.rels]
        self.attrs: list[tuple[str, ...]] = []
        acc: list[str] = []
        for r in self.rels:
            acc += [a for a in r.attrs if a not in acc]
            self.attrs.append(tuple(acc))
        self.views: list[set[tuple]] = [set() for _ in self.rels]  # views[i] = join of 0..i
        self.cost = 0

    def _extend(self, rows: set[tuple], i: int) -> set[tuple]:
        """Join rows over attrs[i-1] with relation i."""
        r = self.rels[i]
        prev = self.attrs[i - 1]
        shared = [(prev.index(a), j) for j, a in enumerate(r.attrs) if a in prev]
        fresh = [j for j, a in enumerate(r.attrs) if a not in prev]
        index: dict[tuple, list[tuple]] = {}
        for t in self.data[i]:
            index.setdefault(tuple(t[j] for _, j in shared), []).append(t)
        out = set()
        for row in rows:
            for t in index.get(tuple(row[p] for p, _ in shared), ()):
                out.add(row + tuple(t[j] for j in fresh))
        return out

    def _seed(self, i: int, t: tuple) -> set[tuple]:
        """Rows of view i that use tuple t of relation i."""
        if i == 0:
            return {t}
        r = self.rels[i]
        prev = self.attrs[i - 1]
        shared = [(prev.index(a), j) for j, a in enumerate(r.attrs) if a in prev]
        fresh = [j for j, a in enumerate(r.attrs) if a not in prev]
        return {
            row + tuple(t[j] for j in fresh)
            for row in self.views[i - 1]
            if all(row[p] == t[j] for p, j in shared)
        }

    def apply(self, ev: UpdateEvent) -> int:
        i = [r.name for r in self.rels].index(ev.relation)
        t = tuple(ev.values)
        if (t in self.data[i]) == (ev.sign > 0):
            return 0
        before = self.cost
        if ev.sign < 0:
            self.data[i].discard(t)
        delta = self._seed(i, t)
        for j in range(i, len(self.rels)):
            if j > i:
                delta = self._extend(delta, j)
            if j >= 1:
                self.cost += len(delta)
            if ev.sign > 0:
                self.views[j] |= delta
            else:
                self.views[j] -= delta
            if not delta:
                break
        if ev.sign > 0:
            self.data[i].add(t)
        return self.cost - before
