"""Function decomposition graphs: parsing, validation, structural queries.

A decomposition graph is a connected DAG with exactly one mission root,
function nodes in the middle, and directive leaves.  Edge kinds follow from
node degrees alone:

* parent with a single outgoing edge  -> refinement
* child with two or more parents      -> intersection
* everything else                     -> decomposition

Every parent->directive edge carries a relevance weight in [0, 1], usually
given as one of four named impact categories.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator

from .rational import fixed, to_fraction


class NodeKind(Enum):
    MISSION = "mission"
    FUNCTION = "function"
    DIRECTIVE = "directive"


class EdgeKind(Enum):
    DECOMPOSITION = "decomposition"
    REFINEMENT = "refinement"
    INTERSECTION = "intersection"


#: Impact categories and the relevance weight each one denotes.
IMPACT_RELEVANCE: dict[str, Fraction] = {
    "catastrophic": Fraction(1),
    "critical": Fraction(7, 10),
    "marginal": Fraction(3, 10),
    "negligible": Fraction(1, 10),
}


def impact_category(value: Fraction) -> str | None:
    """Category name for an exact table weight, or None for other values."""
    for name, weight in IMPACT_RELEVANCE.items():
        if weight == value:
            return name
    return None


class GraphError(Exception):
    """Base class for graph construction and query failures."""


class GraphParseError(GraphError):
    """Malformed graph input (bad JSON, bad structure, bad relevance)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownNodeError(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node id: {node_id!r}")
        self.node_id = node_id


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    label: str = ""


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]


def _expected_kind(outdeg_parent: int, indeg_child: int) -> EdgeKind:
    # Degree rules; order matters, refinement wins over intersection.
    if outdeg_parent == 1:
        return EdgeKind.REFINEMENT
    if indeg_child >= 2:
        return EdgeKind.INTERSECTION
    return EdgeKind.DECOMPOSITION


class FDGraph:
    """Immutable decomposition graph with cached structural queries.

    Instances are built through build_graph / parse_graph.  After
    construction nothing mutates the topology, so the lazy caches only ever
    store values that any thread would compute identically; concurrent reads
    are safe without locking.
    """

    def __init__(
        self,
        nodes: dict[str, Node],
        edge_kinds: dict[tuple[str, str], EdgeKind],
        relevance: dict[tuple[str, str], Fraction],
    ):
        self._nodes = dict(nodes)
        self._edge_kinds = dict(edge_kinds)
        self._relevance = dict(relevance)

        children: dict[str, list[str]] = {i: [] for i in self._nodes}
        parents: dict[str, list[str]] = {i: [] for i in self._nodes}
        for u, v in self._edge_kinds:
            children[u].append(v)
            parents[v].append(u)
        self._children = {i: tuple(sorted(c)) for i, c in children.items()}
        self._parents = {i: tuple(sorted(p)) for i, p in parents.items()}
        self._neighbors = {
            i: tuple(sorted(set(children[i]) | set(parents[i]))) for i in self._nodes
        }
        self._node_ids = tuple(sorted(self._nodes))

        # lazy caches
        self._leaves: dict[str, frozenset[str]] = {}
        self._descendants: dict[str, frozenset[str]] = {}
        self._ancestors: dict[str, frozenset[str]] = {}
        self._dist: dict[str, dict[str, int]] = {}

    # -- basic accessors -------------------------------------------------

    @property
    def node_ids(self) -> tuple[str, ...]:
        return self._node_ids

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def mission_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self._node_ids if self._nodes[i].kind is NodeKind.MISSION)

    @property
    def function_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self._node_ids if self._nodes[i].kind is NodeKind.FUNCTION)

    @property
    def directive_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self._node_ids if self._nodes[i].kind is NodeKind.DIRECTIVE)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def children(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._children[node_id]

    def parents(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._parents[node_id]

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._neighbors[node_id]

    def edges(self) -> list[tuple[str, str, EdgeKind]]:
        return [(u, v, self._edge_kinds[(u, v)]) for u, v in sorted(self._edge_kinds)]

    def has_edge(self, parent: str, child: str) -> bool:
        return (parent, child) in self._edge_kinds

    def edge_kind(self, parent: str, child: str) -> EdgeKind:
        try:
            return self._edge_kinds[(parent, child)]
        except KeyError:
            raise GraphError(f"no edge {parent!r} -> {child!r}") from None

    def relevance(self, directive: str, parent: str) -> Fraction:
        try:
            return self._relevance[(directive, parent)]
        except KeyError:
            raise GraphError(
                f"no relevance recorded for directive {directive!r} under {parent!r}"
            ) from None

    def relevance_items(self) -> list[tuple[str, str, Fraction]]:
        return [(d, p, self._relevance[(d, p)]) for d, p in sorted(self._relevance)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FDGraph):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and self._edge_kinds == other._edge_kinds
            and self._relevance == other._relevance
        )

    __hash__ = None  # structural equality, not hashable

    def __repr__(self) -> str:
        return f"<FDGraph nodes={self.n_nodes} edges={len(self._edge_kinds)}>"

    # -- cached closures -------------------------------------------------

    def _closure(self, start: str, adjacency: dict[str, tuple[str, ...]]) -> frozenset[str]:
        seen: set[str] = set()
        queue = deque(adjacency[start])
        while queue:
            x = queue.popleft()
            if x not in seen:
                seen.add(x)
                queue.extend(adjacency[x])
        return frozenset(seen)


def descendants(graph: FDGraph, node_id: str) -> frozenset[str]:
    """All nodes reachable from node_id along child edges (excluding itself)."""
    graph.node(node_id)
    cache = graph._descendants
    if node_id not in cache:
        cache[node_id] = graph._closure(node_id, graph._children)
    return cache[node_id]


def ancestors(graph: FDGraph, node_id: str) -> frozenset[str]:
    """All nodes from which node_id is reachable (excluding itself)."""
    graph.node(node_id)
    cache = graph._ancestors
    if node_id not in cache:
        cache[node_id] = graph._closure(node_id, graph._parents)
    return cache[node_id]


def leaves_of(graph: FDGraph, node_id: str) -> frozenset[str]:
    """Distinct directives under a node; a directive yields itself.

    Set semantics: a directive reachable along several paths counts once.
    """
    node = graph.node(node_id)
    cache = graph._leaves
    if node_id not in cache:
        if node.kind is NodeKind.DIRECTIVE:
            cache[node_id] = frozenset((node_id,))
        else:
            down = descendants(graph, node_id)
            cache[node_id] = frozenset(
                x for x in down if graph.node(x).kind is NodeKind.DIRECTIVE
            )
    return cache[node_id]


def undirected_distance(graph: FDGraph, u: str, v: str) -> int:
    """Shortest hop count between two nodes ignoring edge direction.

    Intersection edges participate like any other edge.  Raises GraphError
    when the nodes sit in disconnected components.
    """
    graph.node(u)
    graph.node(v)
    cache = graph._dist
    if u not in cache:
        dist = {u: 0}
        queue = deque((u,))
        while queue:
            x = queue.popleft()
            for y in graph._neighbors[x]:
                if y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        cache[u] = dist
    try:
        return cache[u][v]
    except KeyError:
        raise GraphError(f"{u!r} and {v!r} are not connected") from None


def topological_order(graph: FDGraph) -> tuple[str, ...]:
    """Deterministic topological order; GraphError if a cycle exists."""
    indeg = {i: len(graph._parents[i]) for i in graph.node_ids}
    ready = sorted(i for i, d in indeg.items() if d == 0)
    out: list[str] = []
    import heapq

    heapq.heapify(ready)
    while ready:
        x = heapq.heappop(ready)
        out.append(x)
        for c in graph._children[x]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(out) != graph.n_nodes:
        raise GraphError("graph contains a cycle")
    return tuple(out)


def find_cycle(graph: FDGraph) -> list[str] | None:
    """One directed cycle as a node path, or None when the graph is acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {i: WHITE for i in graph.node_ids}
    parent: dict[str, str] = {}
    for root in graph.node_ids:
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(root, iter(graph._children[root]))]
        color[root] = GRAY
        while stack:
            x, it = stack[-1]
            advanced = False
            for y in it:
                if color[y] == WHITE:
                    color[y] = GRAY
                    parent[y] = x
                    stack.append((y, iter(graph._children[y])))
                    advanced = True
                    break
                if color[y] == GRAY:
                    # walk back from x to y to recover the cycle
                    path = [y, x]
                    cur = x
                    while cur != y:
                        cur = parent[cur]
                        path.append(cur)
                    path.reverse()
                    return path
            if not advanced:
                color[x] = BLACK
                stack.pop()
    return None


# -- validation ----------------------------------------------------------


def validate(graph: FDGraph) -> ValidationReport:
    """Check every structural rule and report all violations found."""
    violations: list[Violation] = []

    missions = graph.mission_ids
    if len(missions) != 1:
        violations.append(
            Violation(
                "MISSION_COUNT",
                ",".join(missions) or "-",
                f"expected exactly one mission node, found {len(missions)}",
            )
        )

    cycle = find_cycle(graph)
    if cycle:
        violations.append(
            Violation("CYCLE", " -> ".join(cycle), "decomposition must be acyclic")
        )

    for nid in graph.node_ids:
        node = graph.node(nid)
        indeg = len(graph._parents[nid])
        outdeg = len(graph._children[nid])
        if node.kind is NodeKind.MISSION:
            if indeg > 0:
                violations.append(
                    Violation("NODE_DEGREE", nid, "mission node cannot have parents")
                )
            if outdeg == 0:
                violations.append(
                    Violation("NODE_DEGREE", nid, "mission node has no children")
                )
        elif node.kind is NodeKind.FUNCTION:
            if indeg == 0:
                violations.append(
                    Violation("NODE_DEGREE", nid, "function node has no parents")
                )
            if outdeg == 0:
                violations.append(
                    Violation("NODE_DEGREE", nid, "function node has no children")
                )
        else:
            if outdeg > 0:
                violations.append(
                    Violation("NODE_DEGREE", nid, "directive node cannot have children")
                )

    if missions and not cycle:
        reachable = set(missions)
        for m in missions:
            reachable |= descendants(graph, m)
        for nid in graph.node_ids:
            if nid not in reachable:
                violations.append(
                    Violation("UNREACHABLE", nid, "node is not reachable from the mission")
                )

    for u, v, kind in graph.edges():
        expected = _expected_kind(len(graph._children[u]), len(graph._parents[v]))
        if kind is not expected:
            violations.append(
                Violation(
                    "EDGE_KIND",
                    f"{u}->{v}",
                    f"edge labeled {kind.value} but degrees imply {expected.value}",
                )
            )

    edge_set = set(graph._edge_kinds)
    for u, v, _ in graph.edges():
        if graph.node(v).kind is NodeKind.DIRECTIVE and (v, u) not in graph._relevance:
            violations.append(
                Violation(
                    "RELEVANCE_MISSING", f"{u}->{v}", "directive edge lacks a relevance weight"
                )
            )
    for (d, p), value in sorted(graph._relevance.items()):
        if (p, d) not in edge_set or graph.node(d).kind is not NodeKind.DIRECTIVE:
            violations.append(
                Violation(
                    "RELEVANCE_EXTRA",
                    f"{p}->{d}",
                    "relevance recorded for a missing or non-directive edge",
                )
            )
        elif not (Fraction(0) <= value <= Fraction(1)):
            violations.append(
                Violation(
                    "RELEVANCE_RANGE", f"{p}->{d}", f"relevance {value} outside [0, 1]"
                )
            )

    return ValidationReport(not violations, tuple(violations))


# -- construction ----------------------------------------------------------


def _coerce_relevance(raw) -> Fraction:
    if isinstance(raw, str):
        try:
            return IMPACT_RELEVANCE[raw.lower()]
        except KeyError:
            raise GraphParseError(f"unknown impact category {raw!r}") from None
    try:
        return to_fraction(raw)
    except (TypeError, ValueError) as exc:
        raise GraphParseError(f"bad relevance value {raw!r}: {exc}") from None


def build_graph(nodes: Iterable, edges: Iterable) -> FDGraph:
    """Assemble a graph from node and edge descriptions.

    nodes: Node instances or (id, kind[, label]) tuples.
    edges: (parent, child[, kind[, relevance]]) tuples; kind None means
    "infer from degrees", and relevance is required only on directive edges
    (enforced later by validate, so partially annotated graphs can still be
    inspected).
    """
    node_map: dict[str, Node] = {}
    for spec in nodes:
        if isinstance(spec, Node):
            node = spec
        else:
            nid, kind = spec[0], spec[1]
            label = spec[2] if len(spec) > 2 else ""
            if isinstance(kind, str):
                try:
                    kind = NodeKind(kind.lower())
                except ValueError:
                    raise GraphParseError(f"unknown node kind {spec[1]!r}") from None
            node = Node(nid, kind, label)
        if not node.id or not isinstance(node.id, str):
            raise GraphParseError(f"node id must be a non-empty string, got {node.id!r}")
        if node.id in node_map:
            raise GraphParseError(f"duplicate node id {node.id!r}")
        node_map[node.id] = node

    raw_edges: list[tuple[str, str, EdgeKind | None]] = []
    relevance: dict[tuple[str, str], Fraction] = {}
    seen: set[tuple[str, str]] = set()
    for spec in edges:
        u, v = spec[0], spec[1]
        kind = spec[2] if len(spec) > 2 else None
        rel = spec[3] if len(spec) > 3 else None
        for end in (u, v):
            if end not in node_map:
                raise GraphParseError(f"edge {u!r} -> {v!r} references unknown node {end!r}")
        if u == v:
            raise GraphParseError(f"self loop on {u!r}")
        if (u, v) in seen:
            raise GraphParseError(f"duplicate edge {u!r} -> {v!r}")
        seen.add((u, v))
        if isinstance(kind, str):
            try:
                kind = EdgeKind(kind.lower())
            except ValueError:
                raise GraphParseError(f"unknown edge kind {spec[2]!r}") from None
        if rel is not None:
            if node_map[v].kind is not NodeKind.DIRECTIVE:
                raise GraphParseError(f"relevance on a non-directive edge {u!r} -> {v!r}")
            value = _coerce_relevance(rel)
            if not (Fraction(0) <= value <= Fraction(1)):
                raise GraphParseError(
                    f"relevance {value} on edge {u!r} -> {v!r} outside [0, 1]"
                )
            relevance[(v, u)] = value
        raw_edges.append((u, v, kind))

    outdeg: dict[str, int] = {i: 0 for i in node_map}
    indeg: dict[str, int] = {i: 0 for i in node_map}
    for u, v, _ in raw_edges:
        outdeg[u] += 1
        indeg[v] += 1
    edge_kinds: dict[tuple[str, str], EdgeKind] = {}
    for u, v, kind in raw_edges:
        edge_kinds[(u, v)] = kind or _expected_kind(outdeg[u], indeg[v])

    return FDGraph(node_map, edge_kinds, relevance)


def parse_graph(text: str) -> FDGraph:
    """Parse the JSON graph format into an FDGraph.

    Top level: {"nodes": [...], "edges": [...]}.  Nodes carry id, kind and
    an optional label; edges carry from/to, an optional kind, and (for
    directive children) a relevance given as a number or category name.
    Numbers are read exactly, never through binary floating point.
    """
    try:
        doc = json.loads(text, parse_float=to_fraction)
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise GraphParseError("top level must be a JSON object")
    for key in ("nodes", "edges"):
        if not isinstance(doc.get(key), list):
            raise GraphParseError(f"missing or non-list {key!r} section")

    nodes = []
    for item in doc["nodes"]:
        if not isinstance(item, dict) or "id" not in item or "kind" not in item:
            raise GraphParseError(f"node entry must carry id and kind: {item!r}")
        nodes.append((item["id"], item["kind"], item.get("label", "")))

    edges = []
    for item in doc["edges"]:
        if not isinstance(item, dict) or "from" not in item or "to" not in item:
            raise GraphParseError(f"edge entry must carry from and to: {item!r}")
        edges.append((item["from"], item["to"], item.get("kind"), item.get("relevance")))

    return build_graph(nodes, edges)


def serialize_graph(graph: FDGraph) -> str:
    """Canonical JSON for a graph; parse_graph(serialize_graph(g)) == g.

    Relevance weights are written as their shortest decimal form, which is
    exact for every category weight and any weight entered as a decimal.
    """
    nodes = []
    for nid in graph.node_ids:
        node = graph.node(nid)
        entry: dict = {"id": nid, "kind": node.kind.value}
        if node.label:
            entry["label"] = node.label
        nodes.append(entry)
    edges = []
    for u, v, kind in graph.edges():
        entry = {"from": u, "to": v, "kind": kind.value}
        if (v, u) in graph._relevance:
            entry["relevance"] = float(graph._relevance[(v, u)])
        edges.append(entry)
    return json.dumps({"nodes": nodes, "edges": edges}, indent=2)


# -- rendering -------------------------------------------------------------

_NODE_SHAPE = {
    NodeKind.MISSION: "box",
    NodeKind.FUNCTION: "ellipse",
    NodeKind.DIRECTIVE: "circle",
}
_EDGE_STYLE = {
    EdgeKind.DECOMPOSITION: "solid",
    EdgeKind.REFINEMENT: "dashed",
    EdgeKind.INTERSECTION: "dotted",
}


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: FDGraph, annotations=None) -> str:
    """Graphviz rendering of the graph.

    annotations, when given, is a slice metrics object; its member nodes are
    highlighted and labeled with their cohesion, and the aggregate objective
    value becomes the graph label.
    """
    members = {}
    if annotations is not None:
        members = dict(annotations.per_node_cohesion)
    lines = ["digraph decomposition {", "  rankdir=TB;"]
    if annotations is not None:
        lines.append(f'  label="f = {fixed(annotations.aggregate)}";')
    for nid in graph.node_ids:
        node = graph.node(nid)
        attrs = [f"shape={_NODE_SHAPE[node.kind]}"]
        if node.kind is NodeKind.MISSION:
            attrs.append("peripheries=2")
        if node.label:
            attrs.append(f"label={_dot_quote(nid + chr(10) + node.label)}")
        if nid in members:
            attrs.append("style=filled")
            attrs.append("fillcolor=lightblue")
            attrs.append(f'xlabel="Ch={fixed(members[nid])}"')
        lines.append(f"  {_dot_quote(nid)} [{', '.join(attrs)}];")
    for u, v, kind in graph.edges():
        attrs = [f"style={_EDGE_STYLE[kind]}"]
        if (v, u) in graph._relevance:
            attrs.append(f'label="{fixed(graph._relevance[(v, u)])}"')
        lines.append(f"  {_dot_quote(u)} -> {_dot_quote(v)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
