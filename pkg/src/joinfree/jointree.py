"""Free-connex join trees: construction, exhaustive enumeration, checks, scoring.

A tree mixes input nodes (one per relation) with generalized nodes, which
carry an attribute set but no data. The connex subtree is derived from the
output attributes: starting at the root, a child joins it when its key is
made of output attributes and it (or something below it) contributes output
attributes its parent lacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import MalformedQuery, NotFreeConnex
from .query import Query

# generated trees are collected up to this many before sorting and truncating
SEARCH_CAP = 20_000


@dataclass
class TreeNode:
    id: int
    relation: str | None
    attrs: tuple[str, ...]
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    key: tuple[str, ...] = ()
    in_connex: bool = False

    @property
    def is_input(self) -> bool:
        return self.relation is not None

    @property
    def label(self) -> str:
        if self.relation is not None:
            return self.relation
        return "[" + ",".join(self.attrs) + "]"


@dataclass
class JoinTree:
    nodes: list[TreeNode]
    root: int
    output: tuple[str, ...]

    # structure ----------------------------------------------------------
    def node(self, i: int) -> TreeNode:
        return self.nodes[i]

    def node_of(self, relation: str) -> TreeNode:
        for n in self.nodes:
            if n.relation == relation:
                return n
        raise KeyError(relation)

    def by_label(self, label: str) -> TreeNode:
        for n in self.nodes:
            if n.label == label:
                return n
        raise KeyError(label)

    def ancestors(self, i: int) -> list[int]:
        out = []
        p = self.nodes[i].parent
        while p is not None:
            out.append(p)
            p = self.nodes[p].parent
        return out

    def descendants(self, i: int) -> list[int]:
        out, stack = [], list(self.nodes[i].children)
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.nodes[j].children)
        return out

    def preorder(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(reversed(self.nodes[j].children))
        return out

    def input_depth(self, i: int) -> int:
        """Number of input ancestors, excluding the node itself."""
        return sum(1 for a in self.ancestors(i) if self.nodes[a].is_input)

    @property
    def height(self) -> int:
        best = 0
        for n in self.nodes:
            if not n.children:
                best = max(best, self.input_depth(n.id) + int(n.is_input))
        return best

    @property
    def n_generalized(self) -> int:
        return sum(1 for n in self.nodes if not n.is_input)

    @property
    def connex_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.in_connex]

    # presentation -------------------------------------------------------
    def canonical(self, i: int | None = None) -> str:
        n = self.nodes[self.root if i is None else i]
        head = ("R:" + n.relation) if n.is_input else ("G:" + ",".join(sorted(n.attrs)))
        if n.in_connex:
            head += "*"
        kids = sorted(self.canonical(c) for c in n.children)
        return head + ("(" + ";".join(kids) + ")" if kids else "")

    def render(self) -> str:
        """Indented text, one node per line: kind, attrs, key, connex flag."""
        lines: list[str] = []

        def walk(i: int, depth: int) -> None:
            n = self.nodes[i]
            kind = f"input {n.relation}" if n.is_input else "generalized"
            lines.append(
                f"{'  ' * depth}{kind} attrs=({','.join(n.attrs)}) "
                f"key=({','.join(n.key)}) connex={'yes' if n.in_connex else 'no'}"
            )
            for c in n.children:
                walk(c, depth + 1)

        walk(self.root, 0)
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.render()


# --------------------------------------------------------------------------
# building


def _connex_from_output(nodes: list[TreeNode], root: int, y: frozenset[str]) -> tuple[set[int], bool]:
    """Minimal connex subtree for ``y`` and whether it covers ``y``.

    ``reach`` holds nodes joined to the root through output-only keys; a
    node is kept when it or a kept descendant brings output attributes its
    parent lacks.
    """
    reach = {root}
    order = [root]
    for i in order:
        for c in nodes[i].children:
            if set(nodes[c].key) <= y:
                reach.add(c)
                order.append(c)
    covered = set().union(*(set(nodes[i].attrs) for i in reach))
    keep = {root}
    for i in reversed(order):
        if i == root:
            continue
        n = nodes[i]
        brings = (set(n.attrs) & y) - set(nodes[n.parent].attrs)
        if brings or any(c in keep for c in n.children):
            keep.add(i)
    return keep, y <= covered


def assemble(
    query: Query,
    specs: Sequence[tuple[str | None, Iterable[str]]],
    parents: Sequence[int | None],
    connex: Iterable[int] | None = None,
) -> JoinTree:
    """Create a tree from node specs ``(relation or None, attrs)`` and a parent array.

    Keys are derived from the parent links. The connex subtree is computed
    from the query output unless ``connex`` lists node ids explicitly.
    """
    nodes = []
    for i, (rel, attrs) in enumerate(specs):
        if rel is not None:
            attrs = query.relation(rel).attrs
        else:
            attrs = query.attr_order(attrs)
        nodes.append(TreeNode(i, rel, tuple(attrs), parents[i]))
    roots = [i for i, p in enumerate(parents) if p is None]
    if len(roots) != 1:
        raise MalformedQuery("a join tree needs exactly one root")
    for n in nodes:
        if n.parent is not None:
            nodes[n.parent].children.append(n.id)
            n.key = query.attr_order(set(n.attrs) & set(nodes[n.parent].attrs))
    y = query.output_set
    if connex is None:
        keep, _ = _connex_from_output(nodes, roots[0], y)
    else:
        keep = set(connex)
    for i in keep:
        nodes[i].in_connex = True
    return JoinTree(nodes, roots[0], query.output)


def make_tree(query: Query, layout, connex: Iterable[str] | None = None) -> JoinTree:
    """Build a tree from a nested layout such as ``("[x3]", [("R2", [("R1", [])]), "R3"])``.

    Labels are relation names or bracketed attribute lists for generalized
    nodes; a bare string is a leaf. ``connex`` optionally lists node labels.
    """
    specs: list[tuple[str | None, Iterable[str]]] = []
    parents: list[int | None] = []
    labels: list[str] = []

    def walk(item, parent: int | None) -> None:
        label, kids = (item, []) if isinstance(item, str) else item
        i = len(specs)
        if label.startswith("["):
            inner = label.strip("[]").strip()
            specs.append((None, [a.strip() for a in inner.split(",") if a.strip()]))
        else:
            specs.append((label, ()))
        parents.append(parent)
        labels.append(label)
        for k in kids:
            walk(k, i)

    walk(layout, None)
    ids = None if connex is None else [labels.index(lbl) for lbl in connex]
    return assemble(query, specs, parents, ids)


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class Verification:
    ok: bool
    violation: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def verify_tree(tree: JoinTree, query: Query) -> Verification:
    """Check cover, connect, guard, above and connex; report the first failure."""
    nodes = tree.nodes
    names = [r.name for r in query.relations]
    placed = [n.relation for n in nodes if n.is_input]
    if sorted(placed) != sorted(names):
        return Verification(False, "cover", "input relations must appear exactly once")
    for n in nodes:
        if not n.children and not n.is_input:
            return Verification(False, "cover", f"leaf {n.label} is not an input relation")
        if n.is_input and tuple(n.attrs) != query.relation(n.relation).attrs:
            return Verification(False, "cover", f"{n.label} has the wrong attributes")
    for x in query.attributes:
        holders = [n for n in nodes if x in n.attrs]
        links = sum(1 for n in holders if n.parent is not None and x in nodes[n.parent].attrs)
        if links != len(holders) - 1:
            return Verification(False, "connect", f"nodes containing {x} are not connected")
    for n in nodes:
        if not n.is_input:
            for c in n.children:
                if not set(n.attrs) <= set(nodes[c].attrs):
                    return Verification(False, "guard", f"{n.label} is not contained in {nodes[c].label}")
    for n in nodes:
        if n.is_input:
            for c in n.children:
                if not nodes[c].is_input:
                    return Verification(False, "above", f"generalized {nodes[c].label} under input {n.label}")
    y = set(query.output)
    con = [n for n in nodes if n.in_connex]
    if not nodes[tree.root].in_connex:
        return Verification(False, "connex", "root is not in the connex subtree")
    for n in con:
        if n.parent is not None and not nodes[n.parent].in_connex:
            return Verification(False, "connex", f"connex subtree is disconnected at {n.label}")
        if n.parent is not None and not set(n.key) <= y:
            return Verification(False, "connex", f"key of {n.label} has non-output attributes")
    covered = set().union(*(set(n.attrs) for n in con))
    if not y <= covered:
        return Verification(False, "connex", f"output {sorted(y - covered)} not covered")
    return Verification(True)


# --------------------------------------------------------------------------
# enumeration


def _node_pool(query: Query) -> list[frozenset[str]]:
    """Candidate attribute sets for generalized nodes: intersection closure."""
    base = set(query.edges) | {query.output_set}
    closure = set(base)
    frontier = list(closure)
    while frontier:
        nxt = []
        for a in frontier:
            for b in list(closure):
                c = a & b
                if c not in closure:
                    closure.add(c)
                    nxt.append(c)
        frontier = nxt
    if _connected(query.edges):
        closure.discard(frozenset())
    return sorted(closure, key=lambda s: (len(s), query.attr_order(s)))


def _connected(edges: list[frozenset[str]]) -> bool:
    if not edges:
        return True
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j, e in enumerate(edges):
            if j not in seen and e & edges[i]:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(edges)


class _Search:
    """Root-first construction that assigns a child set to each node in BFS order."""

    def __init__(self, query: Query, max_height: int | None, cap: int) -> None:
        self.query = query
        self.y = query.output_set
        self.max_height = max_height
        self.cap = cap
        self.specs: list[tuple[str | None, frozenset[str]]] = [
            (r.name, frozenset(r.attrs)) for r in query.relations
        ]
        self.n_inputs = len(self.specs)
        self.specs += [(None, g) for g in _node_pool(query)]
        self.found: list[JoinTree] = []
        self.seen: set[str] = set()

    def run(self) -> list[JoinTree]:
        for root in range(len(self.specs)):
            if len(self.found) >= self.cap:
                break
            self.parent: dict[int, int | None] = {root: None}
            self.count: dict[str, int] = {}
            for x in self.specs[root][1]:
                self.count[x] = self.count.get(x, 0) + 1
            self.depth = {root: int(self.specs[root][0] is not None)}
            self.reach = {root: True}
            self.anchor = {root: root}
            self.queue = [root]
            if self.max_height is not None and self.depth[root] > self.max_height:
                continue
            self._expand(0)
        return self.found

    def _expand(self, qi: int) -> None:
        if len(self.found) >= self.cap:
            return
        if qi == len(self.queue):
            if sum(1 for i in self.parent if i < self.n_inputs) == self.n_inputs:
                self._emit()
            return
        u = self.queue[qi]
        rel_u, attrs_u = self.specs[u]
        if rel_u is None:
            eligible = [v for v in range(len(self.specs)) if v not in self.parent and attrs_u <= self.specs[v][1]]
            need = 1 if self.parent[u] is None else 2
        else:
            eligible = [v for v in range(self.n_inputs) if v not in self.parent]
            need = 0
        if self.max_height is not None:
            eligible = [
                v for v in eligible if self.depth[u] + int(self.specs[v][0] is not None) <= self.max_height
            ]
        self._choose(qi, u, eligible, 0, [], need)

    def _choose(self, qi: int, u: int, eligible: list[int], pos: int, chosen: list[int], need: int) -> None:
        if len(self.found) >= self.cap:
            return
        if pos == len(eligible):
            if len(chosen) >= need:
                self.queue.extend(chosen)
                self._expand(qi + 1)
                del self.queue[len(self.queue) - len(chosen):]
            return
        if len(chosen) + (len(eligible) - pos) < need:
            return
        v = eligible[pos]
        if self._place(u, v):
            chosen.append(v)
            self._choose(qi, u, eligible, pos + 1, chosen, need)
            chosen.pop()
            self._unplace(v)
        self._choose(qi, u, eligible, pos + 1, chosen, need)

    def _place(self, u: int, v: int) -> bool:
        attrs_u = self.specs[u][1]
        attrs_v = self.specs[v][1]
        for x in attrs_v:
            if x not in attrs_u and self.count.get(x, 0) > 0:
                return False
        key = attrs_u & attrs_v
        reach = self.reach[u] and key <= self.y
        anchor = v if reach else self.anchor[u]
        if not reach and not (attrs_v & self.y) <= self.specs[anchor][1]:
            return False
        for x in attrs_v:
            self.count[x] = self.count.get(x, 0) + 1
        self.parent[v] = u
        self.depth[v] = self.depth[u] + int(self.specs[v][0] is not None)
        self.reach[v] = reach
        self.anchor[v] = anchor
        return True

    def _unplace(self, v: int) -> None:
        for x in self.specs[v][1]:
            self.count[x] -= 1
        del self.parent[v], self.depth[v], self.reach[v], self.anchor[v]

    def _emit(self) -> None:
        order = list(self.queue)
        index = {v: i for i, v in enumerate(order)}
        specs = [self.specs[v] for v in order]
        parents = [None if self.parent[v] is None else index[self.parent[v]] for v in order]
        tree = assemble(self.query, specs, parents)
        _, covers = _connex_from_output(tree.nodes, tree.root, self.y)
        if not covers:
            return
        canon = tree.canonical()
        if canon in self.seen:
            return
        self.seen.add(canon)
        self.found.append(tree)


def _tree_order(tree: JoinTree) -> tuple:
    return (tree.height, tree.n_generalized, tree.canonical())


def enumerate_trees(
    query: Query,
    limit: int = 256,
    max_height: int | None = None,
    raise_empty: bool = True,
) -> list[JoinTree]:
    """Distinct free-connex join trees, lowest and simplest first.

    The search is exhaustive up to an internal cap; ``limit`` truncates the
    sorted result. ``max_height`` prunes deeper trees during the search.
    """
    cap = limit if limit <= 1 else max(limit, SEARCH_CAP)
    trees = _Search(query, max_height, cap).run()
    trees.sort(key=_tree_order)
    if not trees and raise_empty:
        raise NotFreeConnex("no free-connex join tree exists")
    return trees[:limit]


# --------------------------------------------------------------------------
# scoring


def score_tree(tree: JoinTree, update_counts: Mapping[str, int] | None = None) -> int:
    """Sum over input nodes of (input ancestors) x (updates to the node); missing counts are 1."""
    counts = update_counts or {}
    return sum(
        tree.input_depth(n.id) * counts.get(n.relation, 1) for n in tree.nodes if n.is_input
    )


def choose_plan_tree(
    query: Query,
    update_counts: Mapping[str, int] | None = None,
    candidates: list[JoinTree] | None = None,
) -> JoinTree:
    """Minimum-score tree; ties go to lower height, fewer generalized nodes, canonical order."""
    trees = candidates if candidates is not None else _all_trees(query)
    if not trees:
        raise NotFreeConnex("no free-connex join tree exists")
    return min(trees, key=lambda t: (score_tree(t, update_counts),) + _tree_order(t))


def _all_trees(query: Query) -> list[JoinTree]:
    return enumerate_trees(query, limit=SEARCH_CAP)
