"""Command line entry point.

Exit codes: 0 on success, 2 when ``run --verify`` finds a mismatch, 1 on
usage, input or query errors.
"""

from __future__ import annotations

import argparse
import math
import os
import random
import sys
from typing import Sequence

from .errors import JoinFreeError
from .query import Query, dumps_query, load_query, parse_atoms
from .runner import RunOptions, run
from .service import enclosureness_report, plan_report
from .streams import read_events, write_events
from .workloads import (
    GRAPH_KINDS,
    generate_workload,
    negative_sequence,
    nested_sequence,
    q1_query,
    fig1_query,
    random_trace,
    shape,
    shape_names,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which we reserve
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _query(spec: str, output: str | None) -> Query:
    if os.path.exists(spec):
        return load_query(spec)
    if "(" in spec:
        return parse_atoms(spec, output.split(",") if output else None)
    raise FileNotFoundError(spec)


def _trace(path: str, query: Query):
    return read_events(path, query.logical_arities())


def _tree_arg(text: str):
    return text if text == "auto" else int(text)


def cmd_plan(args) -> int:
    q = _query(args.query, args.output)
    events = _trace(args.trace, q) if args.trace else []
    rep = plan_report(q, events, args.limit)
    print(f"acyclic={str(rep.acyclic).lower()}")
    print(f"free_connex={str(rep.free_connex).lower()}")
    print(f"q_hierarchical={str(rep.q_hierarchical).lower()}")
    if rep.masked:
        print("masked=" + ",".join(rep.masked))
    for t in rep.trees:
        mark = "*" if t.index == rep.chosen else " "
        print(f"{mark} tree {t.index}: height={t.height} generalized={t.generalized} score={t.score}")
        for line in t.render.splitlines():
            print("    " + line)
    return 0


def cmd_run(args) -> int:
    q = _query(args.query, args.output)
    trace = _trace(args.trace, q)
    opts = RunOptions(mode=args.mode, verify=args.verify, tree=_tree_arg(args.tree))
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        report = run(q, trace, opts, out=out)
    finally:
        if args.out:
            out.close()
    err = sys.stderr
    for line in report.lines():
        print(line, file=err)
    if report.verify_note:
        print(f"# verify {report.verify_note}", file=err)
    width = max(len(k) for k in report.metrics())
    print("-" * (width + 16), file=err)
    for k, v in report.metrics().items():
        print(f"{k:<{width}}  {v}", file=err)
    for msg in report.verify_failures[:20]:
        print(f"verify failure: {msg}", file=err)
    return 2 if report.verify_failures else 0


def cmd_enclosureness(args) -> int:
    q = _query(args.query, args.output)
    rep = enclosureness_report(q, _trace(args.trace, q), _tree_arg(args.tree))
    print(f"fifo={str(rep.fifo).lower()}")
    print(f"insertion_only={str(rep.insertion_only).lower()}")
    print(f"deletion_only={str(rep.deletion_only).lower()}")
    print(f"classic_lambda={rep.classic}")
    print(f"tree_lambda={rep.tree_lambda}")
    for rel, v in sorted(rep.per_relation.items()):
        print(f"relation.{rel}={v}")
    print("tree:")
    for line in rep.tree.splitlines():
        print("    " + line)
    return 0


def cmd_gen(args) -> int:
    kind = args.kind
    if kind in GRAPH_KINDS or kind.startswith("chain"):
        w = generate_workload(
            kind,
            args.graph,
            window=math.inf if args.window is None else args.window,
            selectivity=args.selectivity,
            n_edges=args.edges,
            seed=args.seed,
            k=args.k,
        )
        query, events = w.query, w.trace
    elif kind == "negative":
        query, events = fig1_query(), negative_sequence(args.n)
    elif kind == "nested":
        query, events = q1_query(), nested_sequence(args.n)
    elif kind.startswith("random-") and kind[7:] in shape_names():
        query = shape(kind[7:])
        events = random_trace(query, random.Random(args.seed), args.n)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    with open(args.query_out, "w", encoding="utf-8") as fh:
        fh.write(dumps_query(query))
    with open(args.trace_out, "w", encoding="utf-8") as fh:
        write_events(fh, events)
    print(f"query={args.query_out} trace={args.trace_out} events={len(events)}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("joinfree.service:app", host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="joinfree", description="Incremental maintenance of acyclic join queries.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_query(sp):
        sp.add_argument("query", help="YAML query file, or atoms like 'R1(a,b) R2(b,c)'")
        sp.add_argument("--output", help="comma-separated output attributes for inline atoms")

    sp = sub.add_parser("plan", help="classify a query and list join trees")
    with_query(sp)
    sp.add_argument("--trace", help="update trace used to score the trees")
    sp.add_argument("--limit", type=int, default=16)
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("run", help="replay a trace and print the delta stream")
    with_query(sp)
    sp.add_argument("trace")
    sp.add_argument("--mode", default="delta", help="delta, full:K or agg")
    sp.add_argument("--verify", action="store_true", help="compare against the brute-force oracle")
    sp.add_argument("--tree", default="auto", help="auto or an index from 'plan'")
    sp.add_argument("--out", help="write results here instead of stdout")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("enclosureness", help="measure a trace against the chosen tree")
    with_query(sp)
    sp.add_argument("trace")
    sp.add_argument("--tree", default="auto")
    sp.set_defaults(fn=cmd_enclosureness)

    sp = sub.add_parser("gen", help="write a query file and a trace")
    sp.add_argument("kind", help=f"{', '.join(GRAPH_KINDS)}, negative, nested or random-<shape>")
    sp.add_argument("--graph", help="edge list file (default: synthetic)")
    sp.add_argument("--edges", type=int, default=1000)
    sp.add_argument("--window", type=int)
    sp.add_argument("--selectivity", type=float)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--n", type=int, default=10, help="size for negative/nested/random")
    sp.add_argument("--query-out", default="query.yaml")
    sp.add_argument("--trace-out", default="trace.csv")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(fn=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (JoinFreeError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
