"""Incremental maintenance of acyclic join queries with join-free plans."""

from __future__ import annotations

from .aggregation import COUNTING, FLOAT, RINGS, SUM_INT64, AnnotatedEngine, Ring
from .engine import DELETE, INSERT, UpdateEvent, ViewEngine, delete, insert, load
from .enclosureness import classic_lambda, classify_sequence, lifespans, tree_lambda, tree_per_tuple
from .enumeration import complete, delta_enum, full_enum, process
from .errors import *  # noqa: F403
from .jointree import JoinTree, choose_plan_tree, enumerate_trees, make_tree, score_tree, verify_tree
from .query import Query, RelationSchema, classify, load_query, make_free_connex, parse_atoms, validate

__version__ = "0.1.0"

__all__ = [
    "AnnotatedEngine",
    "COUNTING",
    "DELETE",
    "FLOAT",
    "INSERT",
    "JoinTree",
    "Query",
    "RINGS",
    "RelationSchema",
    "Ring",
    "SUM_INT64",
    "UpdateEvent",
    "ViewEngine",
    "choose_plan_tree",
    "classic_lambda",
    "classify",
    "classify_sequence",
    "complete",
    "delete",
    "delta_enum",
    "enumerate_trees",
    "full_enum",
    "insert",
    "lifespans",
    "load",
    "load_query",
    "make_free_connex",
    "make_tree",
    "parse_atoms",
    "process",
    "score_tree",
    "tree_lambda",
    "tree_per_tuple",
    "validate",
    "verify_tree",
]
