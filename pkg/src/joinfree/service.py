"""HTTP service around the engine, plus the report helpers the CLI shares."""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field
from typing import Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import schemas
from .aggregation import AnnotatedEngine
from .enclosureness import classify_sequence, classic_lambda, per_relation, tree_per_tuple, floored_mean
from .engine import DELETE, INSERT, UpdateEvent, ViewEngine
from .enumeration import complete, full_enum
from .errors import EngineBusy, JoinFreeError, NotAcyclic, UnknownRelation
from .jointree import JoinTree, choose_plan_tree, enumerate_trees, score_tree
from .query import Query, classify, query_from_dict
from .runner import RunOptions, pick_tree, prepare, run, update_counts
from .workloads import fan_out

# --------------------------------------------------------------------------
# shared reports


def plan_report(query: Query, events: Sequence[UpdateEvent] = (), limit: int = 16) -> schemas.PlanOut:
    cls = classify(query)
    if not cls.acyclic:
        raise NotAcyclic("query has no generalized join tree")
    q, masked, _ = prepare(query)
    counts = update_counts(q, list(events), 1000) if events else None
    trees = enumerate_trees(q, limit=limit)
    best = choose_plan_tree(q, counts)
    canon = [t.canonical() for t in trees]
    if best.canonical() not in canon:
        trees.append(best)
        canon.append(best.canonical())
    return schemas.PlanOut(
        acyclic=cls.acyclic,
        free_connex=cls.free_connex,
        q_hierarchical=cls.q_hierarchical,
        masked=list(masked),
        trees=[
            schemas.TreeOut(
                index=i,
                height=t.height,
                generalized=t.n_generalized,
                score=score_tree(t, counts),
                render=t.render(),
            )
            for i, t in enumerate(trees)
        ],
        chosen=canon.index(best.canonical()),
    )


def enclosureness_report(query: Query, events: Sequence[UpdateEvent], tree: str | int = "auto") -> schemas.EnclosurenessOut:
    q, _, _ = prepare(query)
    physical = [p for ev in events for p in fan_out(q, ev)]
    t = pick_tree(q, list(events), tree)
    values = tree_per_tuple(physical, t)
    cls = classify_sequence(physical)
    return schemas.EnclosurenessOut(
        fifo=cls.fifo,
        insertion_only=cls.insertion_only,
        deletion_only=cls.deletion_only,
        classic=str(classic_lambda(physical)),
        tree=t.render(),
        tree_lambda=str(floored_mean(list(values.values()))),
        per_relation={k: str(v) for k, v in per_relation(physical, values).items()},
    )


def to_event(e: schemas.EventIn) -> UpdateEvent:
    return UpdateEvent(e.relation, tuple(e.values), INSERT if e.op == "+" else DELETE, e.timestamp, e.annotation)


def to_query(doc: schemas.QueryIn) -> Query:
    return query_from_dict(doc.model_dump(exclude_none=True))


# --------------------------------------------------------------------------
# sessions


@dataclass
class Session:
    id: str
    query: Query
    engine: ViewEngine
    keep: tuple[int, ...] | None
    masked: tuple[str, ...]
    events: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def project(self, t: tuple) -> list:
        return list(t) if self.keep is None else [t[i] for i in self.keep]


def _status(exc: JoinFreeError) -> int:
    if isinstance(exc, EngineBusy):
        return 409
    return 422


def create_app() -> FastAPI:
    app = FastAPI(title="joinfree", version="0.1.0")
    sessions: dict[str, Session] = {}
    registry = threading.Lock()

    @app.exception_handler(JoinFreeError)
    async def _joinfree_error(request: Request, exc: JoinFreeError) -> JSONResponse:
        return JSONResponse(status_code=_status(exc), content={"error": type(exc).__name__, "detail": str(exc)})

    def get(sid: str) -> Session:
        with registry:
            s = sessions.get(sid)
        if s is None:
            raise HTTPException(404, f"no session {sid}")
        return s

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/plan", response_model=schemas.PlanOut)
    def plan(body: schemas.PlanIn) -> schemas.PlanOut:
        return plan_report(to_query(body.query), [to_event(e) for e in body.events], body.limit)

    @app.post("/enclosureness", response_model=schemas.EnclosurenessOut)
    def enclosureness(body: schemas.EnclosurenessIn) -> schemas.EnclosurenessOut:
        return enclosureness_report(to_query(body.query), [to_event(e) for e in body.events], body.tree)

    @app.post("/run", response_model=schemas.RunOut)
    def run_trace(body: schemas.RunIn) -> schemas.RunOut:
        buf = io.StringIO()
        opts = RunOptions(mode=body.mode, verify=body.verify, tree=body.tree)
        report = run(to_query(body.query), [to_event(e) for e in body.events], opts, out=buf)
        return schemas.RunOut(
            metrics=report.metrics(),
            output=buf.getvalue().splitlines(),
            failures=report.verify_failures,
            tree=report.tree,
        )

    @app.post("/sessions", response_model=schemas.SessionOut, status_code=201)
    def open_session(body: schemas.SessionCreate) -> schemas.SessionOut:
        query = to_query(body.query)
        q, masked, keep = prepare(query)
        tree: JoinTree = pick_tree(q, [to_event(e) for e in body.prefix], body.tree)
        engine = AnnotatedEngine(q, tree) if body.mode == "agg" else ViewEngine(q, tree)
        sid = uuid.uuid4().hex[:12]
        with registry:
            sessions[sid] = Session(sid, q, engine, keep, masked)
        return schemas.SessionOut(id=sid, tree=tree.render(), masked=list(masked), output=list(query.output))

    @app.delete("/sessions/{sid}", status_code=204)
    def close_session(sid: str) -> None:
        with registry:
            if sessions.pop(sid, None) is None:
                raise HTTPException(404, f"no session {sid}")

    @app.post("/sessions/{sid}/events", response_model=schemas.BatchOut)
    def push(sid: str, body: schemas.EventBatch) -> schemas.BatchOut:
        s = get(sid)
        out = []
        with s.lock:
            for e in body.events:
                logical = to_event(e)
                if logical.relation not in s.query.logical_arities() and not s.query.copies(logical.relation):
                    raise UnknownRelation(logical.relation)
                s.events += 1
                rows: list[tuple] = []
                ignored = True
                for ev in fan_out(s.query, logical):
                    rec = s.engine.apply(ev)
                    if rec.ignored:
                        continue
                    ignored = False
                    if s.engine.pending is not None:
                        rows.extend(complete(s.engine, rec))
                out.append(schemas.DeltaOut(seq=s.events, sign=logical.sign, rows=[s.project(t) for t in rows], ignored=ignored))
            agg = None
            if isinstance(s.engine, AnnotatedEngine) and not s.query.output:
                agg = s.engine.aggregate_scalar()
        return schemas.BatchOut(deltas=out, aggregate=agg)

    @app.get("/sessions/{sid}/results", response_model=schemas.ResultsOut)
    def results(sid: str, limit: int | None = None) -> schemas.ResultsOut:
        s = get(sid)
        with s.lock:
            rows = []
            for t in full_enum(s.engine):
                if limit is not None and len(rows) >= limit:
                    break
                rows.append(s.project(t))
        return schemas.ResultsOut(rows=rows, count=len(rows))

    @app.get("/sessions/{sid}/groups", response_model=list[schemas.GroupOut])
    def groups(sid: str) -> list[schemas.GroupOut]:
        s = get(sid)
        if not isinstance(s.engine, AnnotatedEngine):
            raise HTTPException(400, "session was not opened in agg mode")
        with s.lock:
            totals = s.engine.group_totals()
        return [schemas.GroupOut(group=s.project(g), value=v) for g, v in sorted(totals.items(), key=repr)]

    @app.get("/sessions/{sid}/stats", response_model=schemas.StatsOut)
    def stats(sid: str) -> schemas.StatsOut:
        s = get(sid)
        with s.lock:
            views = {k: list(v) for k, v in s.engine.view_sizes().items()}
            return schemas.StatsOut(events=s.events, counter_changes=s.engine.counter_change_total(), views=views)

    return app


app = create_app()
