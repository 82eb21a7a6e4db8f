"""Conjunctive queries as hypergraphs: validation, classification and I/O.

A query is a list of relation schemas plus a set of output attributes.
Self-joins are written as several schemas with distinct names that share a
``source`` (the logical relation an update stream refers to).
"""

from __future__ import annotations

import operator
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import yaml

from .errors import MalformedQuery, MixedTypes, NotAcyclic

Value = Any  # int, str or None

_COMPARATORS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_NULL_OPS = ("is_null", "not_null")


@dataclass(frozen=True)
class Predicate:
    """Attribute-vs-constant comparison used for selection pushdown."""

    attr: str
    op: str
    value: Value = None

    def __post_init__(self) -> None:
        if self.op not in _COMPARATORS and self.op not in _NULL_OPS:
            raise MalformedQuery(f"unknown comparator {self.op!r}")
        if self.op in _COMPARATORS and self.value is None:
            raise MalformedQuery(f"comparator {self.op!r} needs a constant")

    def test(self, value: Value) -> bool:
        if self.op == "is_null":
            return value is None
        if self.op == "not_null":
            return value is not None
        if value is None:
            return False
        if isinstance(value, str) != isinstance(self.value, str):
            raise MixedTypes(f"cannot compare {value!r} with {self.value!r}")
        return _COMPARATORS[self.op](value, self.value)

    def to_dict(self) -> dict:
        out: dict = {"attr": self.attr, "op": self.op}
        if self.op not in _NULL_OPS:
            out["value"] = self.value
        return out


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attrs: tuple[str, ...]
    filters: tuple[Predicate, ...] = ()
    source: str | None = None

    @property
    def logical(self) -> str:
        """Name used by update streams; differs from ``name`` for self-join copies."""
        return self.source or self.name

    @property
    def arity(self) -> int:
        return len(self.attrs)

    def accepts(self, values: tuple) -> bool:
        for p in self.filters:
            if not p.test(values[self.attrs.index(p.attr)]):
                return False
        return True


@dataclass(frozen=True)
class Aggregate:
    """Ring annotation settings.

    ``columns`` maps a relation to the attribute whose value is the tuple's
    annotation; relations without an entry are annotated with the ring's one.
    """

    ring: str = "count"
    columns: tuple[tuple[str, str], ...] = ()

    def column_for(self, relation: str) -> str | None:
        return dict(self.columns).get(relation)


@dataclass(frozen=True)
class Query:
    relations: tuple[RelationSchema, ...]
    output: tuple[str, ...]
    aggregate: Aggregate | None = None
    attributes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        seen: dict[str, None] = {}
        for r in self.relations:
            for a in r.attrs:
                seen.setdefault(a, None)
        object.__setattr__(self, "attributes", tuple(seen))

    # hypergraph views -------------------------------------------------
    @property
    def edges(self) -> list[frozenset[str]]:
        return [frozenset(r.attrs) for r in self.relations]

    @property
    def output_set(self) -> frozenset[str]:
        return frozenset(self.output)

    @property
    def is_full(self) -> bool:
        return self.output_set == frozenset(self.attributes)

    def relation(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(name)

    def copies(self, logical: str) -> list[RelationSchema]:
        """Schemas that receive updates addressed to ``logical``."""
        return [r for r in self.relations if r.logical == logical]

    def logical_arities(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.relations:
            out.setdefault(r.logical, r.arity)
            out.setdefault(r.name, r.arity)
        return out

    def attr_order(self, attrs: Iterable[str]) -> tuple[str, ...]:
        """Sort attributes by their first appearance in the query."""
        wanted = set(attrs)
        return tuple(a for a in self.attributes if a in wanted)

    def with_output(self, output: Iterable[str]) -> Query:
        return replace(self, output=tuple(output))


def validate(query: Query) -> Query:
    """Check structural well-formedness and intern all names."""
    if not query.relations:
        raise MalformedQuery("query has no relations")
    names: set[str] = set()
    rels = []
    for r in query.relations:
        if r.name in names:
            raise MalformedQuery(f"duplicate relation name {r.name!r}")
        names.add(r.name)
        if len(set(r.attrs)) != len(r.attrs):
            raise MalformedQuery(f"repeated attribute in {r.name!r}")
        if not r.attrs:
            raise MalformedQuery(f"relation {r.name!r} has no attributes")
        for p in r.filters:
            if p.attr not in r.attrs:
                raise MalformedQuery(f"filter on unknown attribute {p.attr!r} of {r.name!r}")
        rels.append(
            RelationSchema(
                sys.intern(r.name),
                tuple(sys.intern(a) for a in r.attrs),
                r.filters,
                sys.intern(r.source) if r.source else None,
            )
        )
    arity: dict[str, int] = {}
    for r in rels:
        if arity.setdefault(r.logical, r.arity) != r.arity:
            raise MalformedQuery(f"copies of {r.logical!r} disagree on arity")
    out = tuple(sys.intern(a) for a in query.output)
    if len(set(out)) != len(out):
        raise MalformedQuery("repeated output attribute")
    attrs = {a for r in rels for a in r.attrs}
    for a in out:
        if a not in attrs:
            raise MalformedQuery(f"output attribute {a!r} does not occur in any relation")
    agg = query.aggregate
    if agg is not None:
        from .aggregation import RINGS

        if agg.ring not in RINGS:
            raise MalformedQuery(f"unknown ring {agg.ring!r}")
        for rel, col in agg.columns:
            if rel not in names:
                raise MalformedQuery(f"annotation column for unknown relation {rel!r}")
            if col not in query.relation(rel).attrs:
                raise MalformedQuery(f"annotation column {col!r} not in {rel!r}")
    return Query(tuple(rels), out, agg)


# --------------------------------------------------------------------------
# classification


def gyo_acyclic(edges: Iterable[Iterable[str]]) -> bool:
    """GYO ear removal: repeatedly drop lonely vertices and covered edges."""
    es = [set(e) for e in edges]
    changed = True
    while changed and len(es) > 1:
        changed = False
        occurrences: dict[str, int] = {}
        for e in es:
            for x in e:
                occurrences[x] = occurrences.get(x, 0) + 1
        for e in es:
            lonely = {x for x in e if occurrences[x] == 1}
            if lonely:
                e -= lonely
                changed = True
        for i, e in enumerate(es):
            if any(j != i and e <= f and (e != f or j < i) for j, f in enumerate(es)):
                del es[i]
                changed = True
                break
    return len(es) <= 1


def free_connex_by_gyo(query: Query) -> bool:
    """Definitional test: the query and its extension by the output edge are acyclic."""
    return gyo_acyclic(query.edges) and gyo_acyclic(query.edges + [query.output_set])


def q_hierarchical_pairwise(query: Query) -> bool:
    """Pairwise containment test on the sets of relations containing each attribute."""
    occ = {x: frozenset(i for i, e in enumerate(query.edges) if x in e) for x in query.attributes}
    y = query.output_set
    for x1 in query.attributes:
        for x2 in query.attributes:
            a, b = occ[x1], occ[x2]
            if not (a <= b or b <= a or not (a & b)):
                return False
            if x1 in y and a < b and x2 not in y:
                return False
    return True


@dataclass(frozen=True)
class QueryClass:
    acyclic: bool
    free_connex: bool
    q_hierarchical: bool


def classify(query: Query) -> QueryClass:
    """Classify by searching for (height-1) free-connex join trees."""
    from .jointree import enumerate_trees

    acyclic = gyo_acyclic(query.edges)
    if not acyclic:
        return QueryClass(False, False, False)
    free_connex = bool(enumerate_trees(query, limit=1, raise_empty=False))
    q_hier = free_connex and bool(
        enumerate_trees(query, limit=1, max_height=1, raise_empty=False)
    )
    return QueryClass(True, free_connex, q_hier)


def make_free_connex(query: Query) -> tuple[Query, tuple[str, ...]]:
    """Extend the output until the query is free-connex.

    Existential attributes are tried in first-appearance order; after the
    query becomes free-connex, added attributes are dropped again (latest
    first) whenever the query stays free-connex without them. Returns the
    extended query and the attributes to mask out at enumeration time.
    """
    if not gyo_acyclic(query.edges):
        raise NotAcyclic("query has no generalized join tree")
    if free_connex_by_gyo(query):
        return query, ()
    added: list[str] = []
    current = query
    for x in query.attributes:
        if x in query.output_set:
            continue
        added.append(x)
        current = query.with_output(query.output + tuple(added))
        if free_connex_by_gyo(current):
            break
    for x in reversed(list(added)):
        trial = [a for a in added if a != x]
        q = query.with_output(query.output + tuple(trial))
        if free_connex_by_gyo(q):
            added = trial
    extended = query.with_output(query.output + tuple(added))
    return extended, tuple(added)


# --------------------------------------------------------------------------
# query spec files


def query_from_dict(doc: Mapping) -> Query:
    if not isinstance(doc, Mapping) or "relations" not in doc:
        raise MalformedQuery("query spec needs a 'relations' list")
    rels = []
    for r in doc["relations"]:
        try:
            filters = tuple(
                Predicate(f["attr"], f["op"], f.get("value")) for f in r.get("filter", []) or []
            )
            rels.append(RelationSchema(str(r["name"]), tuple(map(str, r["attrs"])), filters, r.get("source")))
        except (KeyError, TypeError) as exc:
            raise MalformedQuery(f"bad relation entry {r!r}") from exc
    agg = None
    if doc.get("aggregate") is not None:
        a = doc["aggregate"]
        agg = Aggregate(str(a.get("ring", "count")), tuple(sorted((a.get("columns") or {}).items())))
    output = doc.get("output")
    if "group_by" in (doc.get("aggregate") or {}):
        output = doc["aggregate"]["group_by"]
    if output is None:
        raise MalformedQuery("query spec needs an 'output' list")
    return validate(Query(tuple(rels), tuple(map(str, output)), agg))


def query_to_dict(query: Query) -> dict:
    rels = []
    for r in query.relations:
        d: dict = {"name": r.name, "attrs": list(r.attrs)}
        if r.source:
            d["source"] = r.source
        if r.filters:
            d["filter"] = [p.to_dict() for p in r.filters]
        rels.append(d)
    doc: dict = {"relations": rels, "output": list(query.output)}
    if query.aggregate is not None:
        doc["aggregate"] = {
            "ring": query.aggregate.ring,
            "group_by": list(query.output),
            "columns": dict(query.aggregate.columns),
        }
    return doc


def loads_query(text: str) -> Query:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedQuery(str(exc)) from exc
    return query_from_dict(doc)


def dumps_query(query: Query) -> str:
    return yaml.safe_dump(query_to_dict(query), sort_keys=False)


def load_query(path: str) -> Query:
    with open(path, encoding="utf-8") as fh:
        return loads_query(fh.read())


def parse_atoms(text: str, output: Iterable[str] | None = None) -> Query:
    """Build a query from ``"R1(x1,x2) R2(x2,x3)"``; output defaults to all attributes."""
    rels = []
    for atom in text.replace("⋈", " ").split(")"):
        atom = atom.strip().strip(",")
        if not atom:
            continue
        name, _, args = atom.partition("(")
        rels.append(RelationSchema(name.strip(), tuple(a.strip() for a in args.split(",") if a.strip())))
    q = Query(tuple(rels), ())
    out = tuple(output) if output is not None else q.attributes
    return validate(Query(tuple(rels), out))
