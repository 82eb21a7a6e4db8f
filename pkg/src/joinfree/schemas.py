"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, Field

Scalar = Union[int, float, str, None]


class EventIn(BaseModel):
    op: Literal["+", "-"]
    relation: str
    values: list[Scalar]
    timestamp: Optional[int] = None
    annotation: Optional[Union[int, float]] = None


class QueryIn(BaseModel):
    """Same layout as the YAML query files."""

    relations: list[dict[str, Any]]
    output: Optional[list[str]] = None
    aggregate: Optional[dict[str, Any]] = None


class SessionCreate(BaseModel):
    query: QueryIn
    tree: Union[Literal["auto"], int] = "auto"
    mode: Literal["delta", "agg"] = "delta"
    prefix: list[EventIn] = Field(default_factory=list, description="events used only to pick the tree")


class SessionOut(BaseModel):
    id: str
    tree: str
    masked: list[str]
    output: list[str]


class EventBatch(BaseModel):
    events: list[EventIn]


class DeltaOut(BaseModel):
    seq: int
    sign: int
    rows: list[list[Scalar]]
    ignored: bool = False


class BatchOut(BaseModel):
    deltas: list[DeltaOut]
    aggregate: Optional[Scalar] = None


class ResultsOut(BaseModel):
    rows: list[list[Scalar]]
    count: int


class GroupOut(BaseModel):
    group: list[Scalar]
    value: Scalar


class StatsOut(BaseModel):
    events: int
    counter_changes: int
    views: dict[str, list[int]]


class TreeOut(BaseModel):
    index: int
    height: int
    generalized: int
    score: int
    render: str


class PlanOut(BaseModel):
    acyclic: bool
    free_connex: bool
    q_hierarchical: bool
    masked: list[str]
    trees: list[TreeOut]
    chosen: int


class PlanIn(BaseModel):
    query: QueryIn
    events: list[EventIn] = Field(default_factory=list)
    limit: int = 16


class EnclosurenessIn(BaseModel):
    query: QueryIn
    events: list[EventIn]
    tree: Union[Literal["auto"], int] = "auto"


class EnclosurenessOut(BaseModel):
    fifo: bool
    insertion_only: bool
    deletion_only: bool
    classic: str
    tree: str
    tree_lambda: str
    per_relation: dict[str, str]


class RunIn(BaseModel):
    query: QueryIn
    events: list[EventIn]
    mode: str = "delta"
    verify: bool = False
    tree: Union[Literal["auto"], int] = "auto"


class RunOut(BaseModel):
    metrics: dict[str, Any]
    output: list[str]
    failures: list[str]
    tree: str
