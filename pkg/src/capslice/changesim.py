"""Change scenarios: applying edits to a graph and sizing their ripple.

A scenario names one edit (modify/delete/add a directive, delete a function
subtree, insert a function).  Applying it always yields a fresh graph that
was re-validated from scratch; the input graph is never touched.  Impact is
measured per slice: the edited directives seed the impact set, and any other
directive whose coupling back to a seed reaches the threshold joins it, one
hop only.  Deletions and modifications are measured on the graph as it was
before the edit (that is where the rework happens); additions are measured
on the changed graph, where the new directive exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .graph import (
    FDGraph,
    GraphParseError,
    Node,
    NodeKind,
    Violation,
    build_graph,
    validate,
)
from .metrics import directive_coupling, resolve_membership
from .rational import to_fraction
from .slicing import Slice

DEFAULT_THRESHOLD = Fraction(1, 8)


class ScenarioKind(Enum):
    MODIFY_DIRECTIVE = "modify_directive"
    DELETE_DIRECTIVE = "delete_directive"
    ADD_DIRECTIVE = "add_directive"
    DELETE_FUNCTION_SUBTREE = "delete_function_subtree"
    ADD_FUNCTION = "add_function"


@dataclass(frozen=True)
class ChangeScenario:
    kind: ScenarioKind
    target: str
    payload: Mapping | None = None


class ChangeError(ValueError):
    def __init__(self, message: str, violations: tuple[Violation, ...] = ()):
        if violations:
            detail = "; ".join(f"{v.code} {v.subject}: {v.message}" for v in violations)
            message = f"{message}: {detail}"
        super().__init__(message)
        self.violations = violations


class ScenarioParseError(ValueError):
    """Malformed scenario file."""


def parse_scenarios(text: str) -> list[ChangeScenario]:
    """Parse a JSON list of {kind, target, payload?} records."""
    try:
        doc = json.loads(text, parse_float=to_fraction)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid scenario JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, list):
        raise ScenarioParseError("scenario file must hold a JSON list")
    out: list[ChangeScenario] = []
    for item in doc:
        if not isinstance(item, dict) or "kind" not in item or "target" not in item:
            raise ScenarioParseError(f"scenario entry must carry kind and target: {item!r}")
        try:
            kind = ScenarioKind(item["kind"])
        except ValueError:
            raise ScenarioParseError(f"unknown scenario kind {item['kind']!r}") from None
        payload = item.get("payload")
        if payload is not None and not isinstance(payload, dict):
            raise ScenarioParseError(f"payload must be an object: {item!r}")
        out.append(ChangeScenario(kind, item["target"], payload))
    return out


# -- edit mechanics ------------------------------------------------------------


def _parts(graph: FDGraph):
    nodes = {nid: graph.node(nid) for nid in graph.node_ids}
    edges = {(u, v) for u, v, _ in graph.edges()}
    relevance = dict(graph._relevance)
    return nodes, edges, relevance


def _rebuild(nodes, edges, relevance) -> FDGraph:
    specs = []
    for u, v in sorted(edges):
        specs.append((u, v, None, relevance.get((v, u))))
    try:
        g = build_graph([nodes[i] for i in sorted(nodes)], specs)
    except GraphParseError as exc:
        raise ChangeError(str(exc)) from exc
    report = validate(g)
    if not report.ok:
        raise ChangeError("edit leaves the graph invalid", report.violations)
    return g


def _cascade_childless(nodes, edges, removed: set[str]) -> set[str]:
    # A function whose children all vanished goes too; the mission never
    # cascades, a childless mission is reported by validation instead.
    removed = set(removed)
    while True:
        out_count = {nid: 0 for nid in nodes if nid not in removed}
        for u, v in edges:
            if u in removed or v in removed:
                continue
            out_count[u] += 1
        newly = [
            nid
            for nid, cnt in out_count.items()
            if cnt == 0 and nodes[nid].kind is NodeKind.FUNCTION
        ]
        if not newly:
            return removed
        removed.update(newly)


def _strip(nodes, edges, relevance, removed: set[str]):
    nodes = {i: n for i, n in nodes.items() if i not in removed}
    edges = {(u, v) for (u, v) in edges if u not in removed and v not in removed}
    relevance = {
        (d, p): r for (d, p), r in relevance.items() if d not in removed and p not in removed
    }
    return nodes, edges, relevance


def _require(graph: FDGraph, target: str, kind: NodeKind, role: str) -> Node:
    if not graph.has_node(target):
        raise ChangeError(f"unknown {role} {target!r}")
    node = graph.node(target)
    if node.kind is not kind:
        raise ChangeError(f"{role} {target!r} is a {node.kind.value}, expected {kind.value}")
    return node


def _apply(graph: FDGraph, scenario: ChangeScenario):
    """Return (changed graph, seed directives, evaluate_on_changed)."""
    payload = dict(scenario.payload or {})
    nodes, edges, relevance = _parts(graph)
    kind = scenario.kind
    target = scenario.target

    if kind is ScenarioKind.MODIFY_DIRECTIVE:
        _require(graph, target, NodeKind.DIRECTIVE, "directive")
        label = payload.pop("label", None)
        rel = payload.pop("relevance", None)
        if payload:
            raise ChangeError(f"unknown payload keys: {', '.join(sorted(payload))}")
        if label is None and rel is None:
            raise ChangeError("modification must change a label or a relevance")
        if label is not None:
            nodes[target] = Node(target, NodeKind.DIRECTIVE, str(label))
        if rel is not None:
            if isinstance(rel, Mapping):
                updates = dict(rel)
            else:
                parents = graph.parents(target)
                if len(parents) != 1:
                    raise ChangeError(
                        f"{target!r} has {len(parents)} parents, relevance must name one"
                    )
                updates = {parents[0]: rel}
            for parent, value in sorted(updates.items()):
                if (target, parent) not in relevance:
                    raise ChangeError(f"{parent!r} is not a parent of {target!r}")
                relevance[(target, parent)] = value
        new = _rebuild(nodes, edges, relevance)
        return new, frozenset((target,)), False

    if kind is ScenarioKind.DELETE_DIRECTIVE:
        _require(graph, target, NodeKind.DIRECTIVE, "directive")
        removed = _cascade_childless(nodes, edges, {target})
        new = _rebuild(*_strip(nodes, edges, relevance, removed))
        return new, frozenset((target,)), False

    if kind is ScenarioKind.ADD_DIRECTIVE:
        if not graph.has_node(target):
            raise ChangeError(f"unknown parent {target!r}")
        if graph.node(target).kind is NodeKind.DIRECTIVE:
            raise ChangeError(f"parent {target!r} is a directive")
        new_id = payload.pop("id", None)
        label = payload.pop("label", "")
        rel = payload.pop("relevance", None)
        if payload:
            raise ChangeError(f"unknown payload keys: {', '.join(sorted(payload))}")
        if not new_id or not isinstance(new_id, str):
            raise ChangeError("payload must name the new directive id")
        if graph.has_node(new_id):
            raise ChangeError(f"node id {new_id!r} already exists")
        if rel is None:
            raise ChangeError("a new directive needs a relevance")
        nodes[new_id] = Node(new_id, NodeKind.DIRECTIVE, str(label))
        edges.add((target, new_id))
        relevance[(new_id, target)] = rel
        new = _rebuild(nodes, edges, relevance)
        return new, frozenset((new_id,)), True

    if kind is ScenarioKind.DELETE_FUNCTION_SUBTREE:
        _require(graph, target, NodeKind.FUNCTION, "function")
        removed = {target}
        # nodes no longer reachable from the mission went with the subtree
        remaining_children: dict[str, list[str]] = {}
        for u, v in edges:
            if u not in removed and v not in removed:
                remaining_children.setdefault(u, []).append(v)
        reachable = set(graph.mission_ids)
        frontier = list(reachable)
        while frontier:
            x = frontier.pop()
            for c in remaining_children.get(x, ()):
                if c not in reachable:
                    reachable.add(c)
                    frontier.append(c)
        removed |= {nid for nid in nodes if nid not in reachable}
        removed = _cascade_childless(nodes, edges, removed)
        seed = frozenset(
            nid for nid in removed if nodes[nid].kind is NodeKind.DIRECTIVE
        )
        new = _rebuild(*_strip(nodes, edges, relevance, removed))
        return new, seed, False

    if kind is ScenarioKind.ADD_FUNCTION:
        if not graph.has_node(target):
            raise ChangeError(f"unknown parent {target!r}")
        if graph.node(target).kind is NodeKind.DIRECTIVE:
            raise ChangeError(f"parent {target!r} is a directive")
        new_id = payload.pop("id", None)
        label = payload.pop("label", "")
        adopted = payload.pop("children", None)
        if payload:
            raise ChangeError(f"unknown payload keys: {', '.join(sorted(payload))}")
        if not new_id or not isinstance(new_id, str):
            raise ChangeError("payload must name the new function id")
        if graph.has_node(new_id):
            raise ChangeError(f"node id {new_id!r} already exists")
        if not adopted:
            raise ChangeError("a new function must adopt at least one child")
        adopted = list(dict.fromkeys(adopted))
        current = set(graph.children(target))
        for c in adopted:
            if c not in current:
                raise ChangeError(f"{c!r} is not a child of {target!r}")
        nodes[new_id] = Node(new_id, NodeKind.FUNCTION, str(label))
        edges.add((target, new_id))
        for c in adopted:
            edges.discard((target, c))
            edges.add((new_id, c))
            if (c, target) in relevance:
                relevance[(c, new_id)] = relevance.pop((c, target))
        seed = frozenset(
            c for c in adopted if graph.node(c).kind is NodeKind.DIRECTIVE
        )
        new = _rebuild(nodes, edges, relevance)
        return new, seed, True

    raise ChangeError(f"unsupported scenario kind {kind!r}")


def apply_change(graph: FDGraph, scenario: ChangeScenario) -> FDGraph:
    """Apply one scenario; the result is always a freshly validated graph."""
    new, _, _ = _apply(graph, scenario)
    return new


# -- impact ---------------------------------------------------------------------


@dataclass(frozen=True)
class ImpactReport:
    scenario: ChangeScenario
    members: tuple[str, ...]
    seed: frozenset[str]
    affected_directives: frozenset[str]
    affected_capabilities: frozenset[str]
    impact_count: int
    threshold: Fraction
    evaluated_on: str  # "base" or "changed"


def impact_set(
    graph: FDGraph,
    slc: Slice,
    scenario: ChangeScenario,
    threshold=DEFAULT_THRESHOLD,
) -> ImpactReport:
    """Directives and capabilities a scenario touches for one slice.

    Every edited (or removed) directive seeds the set; any other directive
    whose coupling onto a seed reaches the threshold is pulled in, without
    chaining further.
    """
    thr = to_fraction(threshold)
    if not Fraction(0) < thr <= Fraction(1):
        raise ValueError(f"threshold {thr} outside (0, 1]")

    changed, seed, on_changed = _apply(graph, scenario)
    if on_changed:
        eval_graph = changed
        membership = resolve_membership(changed, slc.members)
    else:
        eval_graph = graph
        membership = dict(slc.membership)

    affected = set(seed)
    for s in sorted(seed):
        owner = membership[s]
        owner_set = frozenset(d for d, o in membership.items() if o == owner)
        for d in eval_graph.directive_ids:
            if d in affected:
                continue
            if directive_coupling(eval_graph, d, s, owner_set) >= thr:
                affected.add(d)

    capabilities = frozenset(membership[d] for d in affected)
    return ImpactReport(
        scenario=scenario,
        members=slc.members,
        seed=seed,
        affected_directives=frozenset(affected),
        affected_capabilities=capabilities,
        impact_count=len(affected) + len(capabilities),
        threshold=thr,
        evaluated_on="changed" if on_changed else "base",
    )


@dataclass(frozen=True)
class Comparison:
    slices: tuple[Slice, ...]
    scenarios: tuple[ChangeScenario, ...]
    reports: tuple[tuple[ImpactReport, ...], ...]  # indexed [slice][scenario]
    totals: tuple[int, ...]
    winners: tuple[tuple[int, ...], ...]  # per scenario, indices of the least impacted slices


def compare_slices(
    graph: FDGraph,
    slices: Iterable[Slice],
    scenarios: Iterable[ChangeScenario],
    threshold=DEFAULT_THRESHOLD,
) -> Comparison:
    """Impact matrix of every scenario against every slice."""
    slices = tuple(slices)
    scenarios = tuple(scenarios)
    if not slices:
        raise ValueError("need at least one slice to compare")
    reports = tuple(
        tuple(impact_set(graph, s, sc, threshold) for sc in scenarios) for s in slices
    )
    totals = tuple(sum(r.impact_count for r in row) for row in reports)
    winners = []
    for j in range(len(scenarios)):
        counts = [reports[i][j].impact_count for i in range(len(slices))]
        low = min(counts)
        winners.append(tuple(i for i, c in enumerate(counts) if c == low))
    return Comparison(slices, scenarios, reports, totals, tuple(winners))
