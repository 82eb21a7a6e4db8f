"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible in
``pytest -v`` output) before asserting. Run this file directly to print the
lines without pytest.
"""

from __future__ import annotations

import functools
import itertools
import random
import sys
import time
from collections import Counter
from dataclasses import dataclass, field

import pytest

from joinfree.aggregation import COUNTING, AnnotatedEngine
from joinfree.engine import UpdateEvent, ViewEngine, delete, insert, load
from joinfree.enclosureness import classify_sequence, tree_lambda, tree_per_tuple
from joinfree.enumeration import delta_enum, full_enum, process, update_live_views
from joinfree.jointree import enumerate_trees, make_tree
from joinfree.oracle import OracleState, full_join, oracle_group_totals, oracle_query
from joinfree.query import classify, parse_atoms
from joinfree.runner import LeftDeepBaseline, prepare
from joinfree.workloads import (
    FIG1C_LAYOUT,
    fan_out,
    fig1_query,
    fig6_events,
    generate_workload,
    negative_sequence,
    nested_sequence,
    q1_query,
    random_fifo_trace,
    random_insertion_trace,
    random_trace,
    shape,
    shape_names,
    synthetic_edges,
)

N_TRACES = 1000
MAX_EVENTS = 500
FULL_EVERY = 50
# Bound on counter_changes / (sum of per-tuple tree enclosureness + |trace|).
# An update touches at most three counters per affected tuple (its selection
# view entry, its projection count, the parent's count map) and an enclosed
# lifespan is charged once for its two events, hence 6. Random corpora stay
# near 2; the toggle family below tends to 6 from underneath (5.68 at k=32).
PINNED_C = 6

_printer = None


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    if _printer is not None:
        with _printer.disabled():
            print("\n" + line)
    else:
        print(line)


@pytest.fixture(autouse=True)
def _visible(capsys):
    global _printer
    _printer = capsys
    yield
    _printer = None


# ---------------------------------------------------------------- criterion 1


def criterion_1() -> tuple[bool, str]:
    t0 = time.perf_counter()
    problems = []
    q = fig1_query()
    eng = ViewEngine(q, make_tree(q, FIG1C_LAYOUT))
    load(eng, fig6_events())

    def check(cond, what):
        if not cond:
            problems.append(what)

    # initial state
    check(set(full_enum(eng)) == {(1, 2, 4, 4), (2, 2, 4, 4)}, "initial results")
    check(set(eng.node("R2").vs) == {(2, 2), (2, 4)}, "initial V_s(R2)")
    check(len(eng.node("R3").vs) == 4, "initial V_s(R3)")
    check(set(eng.node("[x3]").vs) == {(4,)}, "initial root")
    check(dict(eng.node("R1").vp) == {(2,): 2, (3,): 1}, "initial V_p(R1)")
    check(dict(eng.node("R3").vp) == {(1,): 2, (3,): 1, (4,): 1}, "initial V_p(R3)")

    # insertion of (1,1) into R1
    _, out = process(eng, insert("R1", 1, 1))
    check(sorted(out) == [(1, 1, 1, 1), (1, 1, 1, 2), (1, 1, 4, 4)], "insert delta")
    check(set(eng.node("R2").vs) == {(2, 2), (2, 4), (1, 2), (1, 1), (1, 4)}, "V_s(R2) after insert")
    check(dict(eng.node("R2").vp) == {(2,): 2, (4,): 2, (1,): 1}, "V_p(R2) after insert")
    check(set(eng.node("[x3]").vs) == {(4,), (1,)}, "root after insert")
    check(eng.node("[x3]").base[(1,)] == 2, "root counter of (1)")

    # deletion of (1,1) from R4
    _, out = process(eng, delete("R4", 1, 1))
    check(out == [(1, 1, 1, 1)], "delete delta")
    check((1,) not in eng.node("R4").vp, "V_p(R4) after delete")
    check((1, 1) not in eng.node("R3").vs, "V_s(R3) after delete")
    check(eng.node("R3").vp[(1,)] == 1, "V_p(R3) count 2 -> 1")
    check(set(eng.node("[x3]").vs) == {(4,), (1,)}, "root unchanged by delete")
    check(eng.audit() == [], "audit")
    dt = time.perf_counter() - t0
    check(dt < 1.0, "time")
    ok = not problems
    return ok, f"running example replay exact in {dt * 1000:.1f} ms" + ("" if ok else f"; mismatches: {problems}")


def test_criterion_1_running_example():
    ok, detail = criterion_1()
    report(1, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 2 corpus


@dataclass
class Corpus:
    traces: int = 0
    events: int = 0
    delta_checks: int = 0
    full_checks: int = 0
    delta_failures: list = field(default_factory=list)
    full_failures: list = field(default_factory=list)
    space_checks: int = 0
    space_violations: list = field(default_factory=list)
    agg_checks: int = 0
    agg_failures: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    shapes: Counter = field(default_factory=Counter)
    seconds: float = 0.0


def _trace_seed(i: int) -> int:
    return 7919 * i + 17


@functools.lru_cache(maxsize=1)
def corpus() -> Corpus:
    c = Corpus()
    names = shape_names()
    trees = {n: enumerate_trees(shape(n), limit=8) for n in names}
    scalar_trees = {n: enumerate_trees(shape(n).with_output([]), limit=4) for n in names}
    t0 = time.perf_counter()
    for i in range(N_TRACES):
        name = names[i % len(names)]
        q = shape(name)
        rng = random.Random(_trace_seed(i))
        trace = random_trace(q, rng, rng.randint(1, MAX_EVENTS), domain=3)
        tree = trees[name][(i // len(names)) % len(trees[name])]
        eng = ViewEngine(q, tree)
        groups = AnnotatedEngine(q, tree, "count")
        qs = q.with_output([])
        scalar = AnnotatedEngine(qs, scalar_trees[name][i % len(scalar_trees[name])], "count")
        oracle = OracleState(q)
        before: set = set()
        for k, ev in enumerate(trace, 1):
            _, out = process(eng, ev)
            process(groups, ev)
            process(scalar, ev)
            oracle.apply(ev)
            after = oracle_query(oracle)
            want = (after - before) if ev.sign > 0 else (before - after)
            c.delta_checks += 1
            if len(out) != len(set(out)) or set(out) != want:
                c.delta_failures.append((name, i, k))
            before = after
            # space
            c.space_checks += 1
            if not eng.space_ratio_ok(3):
                c.space_violations.append((name, i, k))
            # aggregation
            c.agg_checks += 1
            totals = oracle_group_totals(oracle, COUNTING, lambda r, t: 1)
            n_bindings = sum(1 for _ in full_join(q, oracle.relations))
            if groups.group_totals() != totals or scalar.aggregate_scalar() != n_bindings:
                c.agg_failures.append((name, i, k))
            if k % FULL_EVERY == 0 or k == len(trace):
                rows = list(full_enum(eng))
                c.full_checks += 1
                if len(rows) != len(set(rows)) or set(rows) != after:
                    c.full_failures.append((name, i, k))
        lam = sum(tree_per_tuple(trace, tree).values())
        c.ratios.append(eng.counter_change_total() / (lam + len(trace)))
        c.traces += 1
        c.events += len(trace)
        c.shapes[name] += 1
    c.seconds = time.perf_counter() - t0
    return c


def criterion_2() -> tuple[bool, str]:
    c = corpus()
    ok = not c.delta_failures and not c.full_failures and c.seconds < 300 and c.traces == N_TRACES
    detail = (
        f"{c.traces} traces / {c.events} events over {len(c.shapes)} shapes; "
        f"{c.delta_checks} delta and {c.full_checks} full-enumeration checks, "
        f"{len(c.delta_failures) + len(c.full_failures)} mismatches; {c.seconds:.0f} s"
    )
    if c.delta_failures or c.full_failures:
        detail += f"; first: {(c.delta_failures + c.full_failures)[0]}"
    return ok, detail


def test_criterion_2_oracle_equivalence():
    ok, detail = criterion_2()
    report(2, ok, detail)
    assert ok, detail


def criterion_3() -> tuple[bool, str]:
    c = corpus()
    ok = not c.space_violations
    return ok, f"{c.space_checks} post-event checks of views <= 3 x base, {len(c.space_violations)} violations"


def test_criterion_3_space_invariant():
    ok, detail = criterion_3()
    report(3, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 4


def criterion_4() -> tuple[bool, str]:
    names = shape_names()
    bad_ins, bad_fifo = [], []
    for i in range(100):
        name = names[i % len(names)]
        q = shape(name)
        rng = random.Random(1000 + i)
        trees = enumerate_trees(q, limit=8)
        tree = trees[i % len(trees)]
        trace = random_insertion_trace(q, rng, rng.randint(1, 300))
        if not classify_sequence(trace).insertion_only or tree_lambda(trace, tree) != 1:
            bad_ins.append((name, i))
    for i in range(100):
        name = names[i % len(names)]
        q = shape(name)
        rng = random.Random(2000 + i)
        low = [t for t in enumerate_trees(q, limit=40) if t.height <= 2]
        tree = low[i % len(low)]
        trace = random_fifo_trace(q, rng, rng.randint(1, 200), window=rng.randint(1, 40))
        if not classify_sequence(trace).fifo or tree_lambda(trace, tree) != 1:
            bad_fifo.append((name, i))
    q = q1_query()
    seq = nested_sequence(32)
    lams = [
        tree_lambda(seq, make_tree(q, ("[x2]", [("R1", ["R2"])]))),
        tree_lambda(seq, make_tree(q, ("[x2]", [("R2", ["R1"])]))),
        tree_lambda(seq, make_tree(q, ("[x2]", ["R1", "R2"]))),
    ]
    ok = not bad_ins and not bad_fifo and lams == [32, 32, 1]
    detail = (
        f"insertion-only lambda_T=1 on {100 - len(bad_ins)}/100, FIFO height<=2 lambda_T=1 on "
        f"{100 - len(bad_fifo)}/100; nested n=32 gives {[str(x) for x in lams]}"
    )
    return ok, detail


def test_criterion_4_enclosureness_laws():
    ok, detail = criterion_4()
    report(4, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 5


def _negative_costs(n: int) -> tuple[float, int]:
    q = fig1_query()
    eng = ViewEngine(q, make_tree(q, FIG1C_LAYOUT), track_deltas=False)
    seq = negative_sequence(n)
    worst = 0
    for ev in seq:
        before = eng.counter_change_total()
        eng.apply(ev)
        worst = max(worst, eng.counter_change_total() - before)
    return eng.counter_change_total() / len(seq), worst


def _baseline_cost(n: int) -> float:
    base = LeftDeepBaseline(fig1_query())
    seq = negative_sequence(n)
    return sum(base.apply(ev) for ev in seq) / len(seq)


def _toggle_ratio(k: int, rounds: int = 200) -> float:
    """k R2 tuples share a join key while one R1 tuple is inserted and deleted repeatedly."""
    q = q1_query()
    events = [insert("R2", 1, j) for j in range(k)]
    events += [ev for _ in range(rounds) for ev in (insert("R1", 1, 1), delete("R1", 1, 1))]
    events = [UpdateEvent(e.relation, e.values, e.sign, i + 1) for i, e in enumerate(events)]
    worst = 0.0
    for tree in enumerate_trees(q):
        eng = ViewEngine(q, tree, track_deltas=False)
        for ev in events:
            eng.apply(ev)
        lam = sum(tree_per_tuple(events, tree).values())
        worst = max(worst, eng.counter_change_total() / (lam + len(events)))
    return worst


def criterion_5() -> tuple[bool, str]:
    amortized, worst = {}, {}
    for n in (50, 100, 200):
        amortized[n], worst[n] = _negative_costs(n)
    flat = max(amortized.values()) <= 8 and max(amortized.values()) - min(amortized.values()) < 0.1
    base = {n: _baseline_cost(n) for n in (4, 8, 16)}
    # doubling n more than quadruples the baseline's per-event work
    grows = base[8] > 4 * base[4] and base[16] > 4 * base[8]
    c = corpus()
    fit = max(c.ratios)
    toggles = {k: _toggle_ratio(k) for k in (1, 8, 32)}
    bound = fit <= PINNED_C and max(toggles.values()) <= PINNED_C
    ok = flat and grows and bound
    detail = (
        "counter changes per event (amortized over the trace) "
        + ", ".join(f"n={n}: {amortized[n]:.3f}" for n in amortized)
        + "; single worst event "
        + ", ".join(f"n={n}: {worst[n]}" for n in worst)
        + "; left-deep baseline per event "
        + ", ".join(f"n={n}: {base[n]:.0f}" for n in base)
        + f"; changes/(sum lambda_T + |trace|) corpus max {fit:.3f}, toggle family "
        + ", ".join(f"k={k}: {r:.3f}" for k, r in toggles.items())
        + f", all <= C={PINNED_C}"
    )
    return ok, detail


def test_criterion_5_update_cost_bound():
    ok, detail = criterion_5()
    report(5, ok, detail)
    assert ok, detail


def test_single_event_worst_case_is_linear_in_n():
    # The first tuple of a new join key bumps every sibling counter once; the
    # constant bound above is amortized, this records the per-event worst case.
    worst = {n: _negative_costs(n)[1] for n in (50, 100)}
    assert worst == {50: 3 * 50 + 1, 100: 3 * 100 + 1}


# ---------------------------------------------------------------- criterion 6


def _gaps(n: int) -> tuple[int, int]:
    w = generate_workload("3hop", synthetic_edges(n, n // 4, seed=7), window=n // 2, selectivity=0.1)
    q = w.query
    eng = ViewEngine(q, enumerate_trees(q)[0])
    delta_gap = 0
    for ev in w.trace:
        for p in fan_out(q, ev):
            rec = eng.apply(p)
            if eng.pending is not None:
                batch = delta_enum(eng, rec)
                for _ in batch:
                    pass
                delta_gap = max(delta_gap, batch.max_gap)
                update_live_views(eng, batch)
    cur = full_enum(eng)
    for _ in cur:
        pass
    return delta_gap, cur.max_gap


def criterion_6() -> tuple[bool, str]:
    gaps = {n: _gaps(n) for n in (10**3, 10**4, 10**5)}
    d = [g[0] for g in gaps.values()]
    f = [g[1] for g in gaps.values()]
    ok = max(d) < 2 * min(d) and max(f) < 2 * min(f)
    detail = "max ops between yields (delta, full): " + ", ".join(f"{n} edges: {g}" for n, g in gaps.items())
    return ok, detail


def test_criterion_6_constant_delay():
    ok, detail = criterion_6()
    report(6, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 7


def criterion_7() -> tuple[bool, str]:
    c = corpus()
    # insert then inverse on the integer ring restores the exact state
    from joinfree.query import loads_query

    q = loads_query(
        "relations: [{name: R1, attrs: [a, b]}, {name: R2, attrs: [b, c]}, {name: R3, attrs: [c, d]}]\n"
        "aggregate: {ring: sum, group_by: [a], columns: {R2: c}}\n"
    )
    restored = 0
    trials = 0
    for tree in enumerate_trees(q, limit=6):
        eng = AnnotatedEngine(q, tree)
        rng = random.Random(tree.canonical())
        for ev in random_trace(q, rng, 200, domain=4, delete_prob=0.2):
            process(eng, ev)
        for rel in ("R1", "R2", "R3") * 5:
            t = (rng.randrange(-3, 4), rng.randrange(-3, 4))
            if t in eng.by_relation[rel].base:
                continue
            trials += 1
            before = (eng.snapshot(), eng.annotation_state())
            process(eng, insert(rel, *t))
            process(eng, delete(rel, *t))
            if (eng.snapshot(), eng.annotation_state()) == before and eng.audit_annotations() == []:
                restored += 1
    ok = not c.agg_failures and restored == trials and trials > 0
    detail = (
        f"{c.agg_checks} post-event scalar and GROUP BY comparisons, {len(c.agg_failures)} mismatches; "
        f"insert-then-inverse restored {restored}/{trials}"
    )
    return ok, detail


def test_criterion_7_aggregation():
    ok, detail = criterion_7()
    report(7, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 8


def criterion_8() -> tuple[bool, str]:
    star = classify(shape("star"))
    full4 = shape("4hop-full")
    cls4 = classify(full4)
    h2 = [t for t in enumerate_trees(full4) if t.height == 2]
    two = parse_atoms("R1(x1,x2) R2(x2,x3)", ["x1", "x3"])
    cls2 = classify(two)
    ext, masked, keep = prepare(two)
    eng = ViewEngine(ext, enumerate_trees(ext)[0])
    oracle = OracleState(two)
    mismatches = 0
    dupes = 0
    for ev in random_trace(two, random.Random(8), 400):
        process(eng, ev)
        oracle.apply(ev)
        rows = list(full_enum(eng, keep=keep))
        dupes += len(rows) - len(set(rows))
        if set(rows) != oracle_query(oracle):
            mismatches += 1
    ok = star.q_hierarchical and cls4.free_connex and bool(h2) and not cls2.free_connex and masked == ("x2",) and mismatches == 0
    detail = (
        f"star q_hierarchical={star.q_hierarchical}; 4-hop full free_connex={cls4.free_connex} "
        f"with {len(h2)} height-2 trees; two-hop projection extended with mask {masked}, "
        f"{mismatches} oracle mismatches over 400 events ({dupes} duplicate rows permitted)"
    )
    return ok, detail


def test_criterion_8_classification():
    ok, detail = criterion_8()
    report(8, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, fn in enumerate(
        [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8], 1
    ):
        ok, detail = fn()
        report(n, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
