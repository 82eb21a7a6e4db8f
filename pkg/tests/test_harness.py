from __future__ import annotations

import io
import math
import random

import pytest

from joinfree.engine import DELETE, INSERT, UpdateEvent, insert
from joinfree.enclosureness import classify_sequence
from joinfree.errors import BadGraphFile
from joinfree.oracle import OracleState, oracle_query
from joinfree.query import classify, parse_atoms
from joinfree.runner import LeftDeepBaseline, RunOptions, pick_tree, run
from joinfree.streams import format_event, format_result, parse_events, parse_value, read_edges, write_events
from joinfree.workloads import (
    fan_out,
    fig1_query,
    generate_workload,
    graph_query,
    negative_sequence,
    random_trace,
    shape,
    synthetic_edges,
    window_events,
)

# ------------------------------------------------------------------ streams


def test_value_parsing():
    assert parse_value("12") == 12
    assert parse_value("-3") == -3
    assert parse_value("NULL") is None
    assert parse_value("abc") == "abc"


def test_event_round_trip():
    events = [UpdateEvent("R", (1, None, "x"), INSERT, 7), UpdateEvent("R", (2, 3, "y"), DELETE)]
    buf = io.StringIO()
    write_events(buf, events)
    back = list(parse_events(buf.getvalue().splitlines(), {"R": 3}))
    assert back == events


def test_trailing_timestamp_only_with_arities():
    line = ["+,R,1,2,9"]
    assert next(parse_events(line, {"R": 2})).timestamp == 9
    assert next(parse_events(line)).values == (1, 2, 9)


@pytest.mark.parametrize("line", ["*,R,1", "+", "+,R,1,2,3,4"])
def test_bad_event_lines(line):
    with pytest.raises(ValueError):
        list(parse_events([line], {"R": 2}))


def test_format_result():
    assert format_result(-1, (1, None)) == "-,1,NULL"
    assert format_event(insert("R", 4)) == "+,R,4"


def test_read_edges(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n1 2\n2\t3\n\n")
    assert read_edges(str(p)) == [(1, 2), (2, 3)]
    p.write_text("1 x\n")
    with pytest.raises(BadGraphFile):
        read_edges(str(p))
    with pytest.raises(BadGraphFile):
        read_edges(str(tmp_path / "missing.txt"))


# ---------------------------------------------------------------- workloads


def test_fan_out_to_copies():
    q = graph_query("3hop")
    phys = fan_out(q, insert("G", 1, 2))
    assert [p.relation for p in phys] == ["G1", "G2", "G3"]


def test_self_join_deltas_match_oracle():
    w = generate_workload("3hop", n_edges=60, seed=4)
    oracle = OracleState(w.query)
    buf = io.StringIO()
    rep = run(w.query, w.trace, RunOptions(verify=True), out=buf)
    assert rep.ok and rep.verified
    for ev in w.trace:
        for p in fan_out(w.query, ev):
            oracle.apply(p)
    assert rep.delta_results == len(oracle_query(oracle))


def test_window_trace_is_fifo_and_filtered():
    w = generate_workload("3hop", n_edges=200, window=20, selectivity=0.1)
    assert classify_sequence(w.trace).fifo
    g3 = w.query.relation("G3")
    assert g3.filters and g3.filters[0].op == "<"
    assert w.meta["threshold"] == math.ceil(0.1 * w.meta["vertices"])


def test_unbounded_window_is_insertion_only():
    w = generate_workload("4hop", n_edges=50)
    assert classify_sequence(w.trace).insertion_only


def test_star_workload_is_q_hierarchical():
    w = generate_workload("star", n_edges=1000)
    assert classify(w.query).q_hierarchical


def test_chain_k():
    q = generate_workload("chain-5", n_edges=10).query
    assert len(q.relations) == 5


def test_window_events_tie_order():
    ev = window_events([("G", (1, 2)), ("G", (2, 3)), ("G", (3, 4))], 2)
    assert [(e.timestamp, e.sign) for e in ev] == [(1, 1), (2, 1), (3, -1), (3, 1)]


# ------------------------------------------------------------------- runner


@pytest.mark.parametrize("mode", ["delta", "full:5", "agg"])
def test_run_verifies_random_trace(mode):
    q = shape("4hop-projected")
    rep = run(q, random_trace(q, random.Random(9), 200), RunOptions(mode=mode, verify=True))
    assert rep.verified is True and rep.space_violations == 0


def test_full_every_k_on_empty_trace():
    buf = io.StringIO()
    rep = run(shape("3hop"), [], RunOptions(mode="full:3"), out=buf)
    assert rep.full_enumerations == 1 and rep.full_results == 0
    assert buf.getvalue() == "# full 0 0\n"


def test_masked_run_matches_original_query():
    q = parse_atoms("R1(x1,x2) R2(x2,x3)", ["x1", "x3"])
    trace = random_trace(q, random.Random(2), 80)
    buf = io.StringIO()
    rep = run(q, trace, RunOptions(mode="full:80"), out=buf)
    assert rep.masked == ("x2",)
    rows = {tuple(int(v) for v in line[2:].split(",")) for line in buf.getvalue().splitlines() if line.startswith("+")}
    oracle = OracleState(q)
    for ev in trace:
        oracle.apply(ev)
    assert rows == oracle_query(oracle)


def test_verify_disables_on_large_input():
    q = shape("q1")
    trace = [insert(r, i, i) for i in range(40) for r in ("R1", "R2")]
    rep = run(q, trace, RunOptions(verify=True, verify_limit=50))
    assert rep.verify_note == "disabled after event 51: more than 50 base tuples"
    assert rep.verified is True
    assert RunOptions().verify_limit == 1000


def test_aggregate_scalar_output():
    q = fig1_query().with_output([])
    buf = io.StringIO()
    rep = run(q, [insert("R1", 1, 2), insert("R2", 2, 3), insert("R3", 3, 4), insert("R4", 4, 5)], RunOptions(mode="agg"), out=buf)
    assert rep.aggregate == 1
    assert buf.getvalue().splitlines()[-1] == "# aggregate 1"


def test_output_is_byte_identical_across_runs():
    q = shape("star")
    trace = random_trace(q, random.Random(8), 300)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        run(q, trace, RunOptions(), out=buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]


def test_metrics_lines():
    rep = run(shape("q1"), random_trace(shape("q1"), random.Random(1), 20))
    keys = [line.split("=")[0] for line in rep.lines()]
    assert "counter_changes" in keys and "latency_max_ns" in keys and "verified" in keys


def test_explicit_tree_index():
    q = shape("q1")
    assert pick_tree(q, [], 1).canonical() != pick_tree(q, [], 0).canonical()


def test_left_deep_baseline_grows_with_n():
    per_event = []
    for n in (6, 12):
        base = LeftDeepBaseline(fig1_query())
        seq = negative_sequence(n)
        costs = [base.apply(ev) for ev in seq]
        per_event.append(max(costs))
    assert per_event[1] >= 4 * per_event[0]


def test_work_is_linear_in_input_plus_output():
    # counter changes plus emitted rows, per input event or output row
    ratios = []
    for sel in (0.001, 0.01, 0.1, 1.0):
        w = generate_workload("3hop", synthetic_edges(2000, 500, seed=3), window=1000, selectivity=sel)
        r = run(w.query, w.trace)
        ratios.append((r.counter_changes + r.delta_results) / (len(w.trace) + r.delta_results))
    assert max(ratios) < 2 * min(ratios)
