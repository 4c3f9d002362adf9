"""Cohesion, size and coupling measures over decomposition graphs.

Cohesion of a node n is a weighted mean over its children c:

    Ch(n) = sum(w(c) * contrib(c)) / sum(w(c))

where a directive child contributes its relevance to n with weight 1 and a
function child contributes its own cohesion with weight size_of(child).
With only directive children this is the arithmetic mean of relevances; with
a single child it passes the child's value through unchanged.

Coupling from directive u onto directive v owned by directive set D is

    Cp(u, v, D) = (1 / |D|) / dist(u, v)

with dist measured on the undirected graph.  Capability-level coupling
averages Cp over the two resolved directive sets and is generally
asymmetric.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

from .graph import (
    FDGraph,
    GraphError,
    NodeKind,
    descendants,
    leaves_of,
    undirected_distance,
)


class CohesionUndefinedError(GraphError):
    """Cohesion requested on a directive."""


class MembershipError(GraphError):
    """Base class for membership resolution failures."""


class UncoveredDirectiveError(MembershipError):
    def __init__(self, directives: Iterable[str]):
        self.directives = tuple(sorted(directives))
        super().__init__(f"directives not covered by any member: {', '.join(self.directives)}")


class UnresolvableSharingError(MembershipError):
    def __init__(self, directive: str, parent: str, members: tuple[str, str]):
        self.directive = directive
        self.parent = parent
        self.members = members
        super().__init__(
            f"members {members[0]} and {members[1]} both reach {directive} "
            f"through parent {parent}"
        )


def size_of(graph: FDGraph, node_id: str) -> int:
    """Number of distinct directives under a node; 1 for a directive."""
    if graph.node(node_id).kind is NodeKind.DIRECTIVE:
        return 1
    return len(leaves_of(graph, node_id))


def _cohesion_eval(graph: FDGraph, start: str, memo: dict[str, Fraction]) -> Fraction:
    # Iterative post-order over function children; guards against cycles so
    # a bad graph fails loudly instead of hanging.
    on_stack: set[str] = set()
    stack = [start]
    while stack:
        n = stack[-1]
        if n in memo:
            stack.pop()
            on_stack.discard(n)
            continue
        on_stack.add(n)
        pending = [
            c
            for c in graph.children(n)
            if graph.node(c).kind is not NodeKind.DIRECTIVE and c not in memo
        ]
        blocked = [c for c in pending if c in on_stack]
        if blocked:
            raise GraphError(f"cycle through {blocked[0]!r} while evaluating cohesion")
        if pending:
            stack.extend(pending)
            continue
        num = Fraction(0)
        den = Fraction(0)
        for c in graph.children(n):
            if graph.node(c).kind is NodeKind.DIRECTIVE:
                weight = Fraction(1)
                contrib = graph.relevance(c, n)
            else:
                weight = Fraction(size_of(graph, c))
                contrib = memo[c]
            num += weight * contrib
            den += weight
        if den == 0:
            raise GraphError(f"{n!r} has no children, cohesion undefined")
        memo[n] = num / den
        stack.pop()
        on_stack.discard(n)
    return memo[start]


def cohesion(graph: FDGraph, node_id: str) -> Fraction:
    """Cohesion of a mission or function node as an exact rational."""
    node = graph.node(node_id)
    if node.kind is NodeKind.DIRECTIVE:
        raise CohesionUndefinedError(f"cohesion is undefined for directive {node_id!r}")
    return _cohesion_eval(graph, node_id, {})


def cohesion_map(graph: FDGraph) -> dict[str, Fraction]:
    """Cohesion of every mission and function node, one shared evaluation."""
    memo: dict[str, Fraction] = {}
    out: dict[str, Fraction] = {}
    for nid in graph.node_ids:
        if graph.node(nid).kind is not NodeKind.DIRECTIVE:
            out[nid] = _cohesion_eval(graph, nid, memo)
    return out


# -- membership ------------------------------------------------------------


def parent_routes(graph: FDGraph, member: str, directive: str) -> frozenset[str]:
    """Immediate parents of a directive through which a member reaches it."""
    reach = descendants(graph, member) | {member}
    return frozenset(p for p in graph.parents(directive) if p in reach)


def _cover_map(graph: FDGraph, members: list[str]) -> dict[str, list[str]]:
    cover: dict[str, list[str]] = {}
    for m in members:
        for d in sorted(leaves_of(graph, m)):
            cover.setdefault(d, []).append(m)
    return cover


def sharing_conflicts(
    graph: FDGraph, members: Iterable[str]
) -> list[tuple[str, str, tuple[str, str]]]:
    """All (directive, parent, member pair) entries where two members reach
    the same directive through the same immediate parent."""
    members = sorted(set(members))
    conflicts: list[tuple[str, str, tuple[str, str]]] = []
    for d, owners in sorted(_cover_map(graph, members).items()):
        if len(owners) < 2:
            continue
        seen: dict[str, str] = {}
        for m in owners:
            for p in sorted(parent_routes(graph, m, d)):
                if p in seen and seen[p] != m:
                    conflicts.append((d, p, (seen[p], m)))
                else:
                    seen[p] = m
    return conflicts


def resolve_membership(
    graph: FDGraph, members: Iterable[str], *, complete: bool = True
) -> dict[str, str]:
    """Assign each covered directive to exactly one owning member.

    A directive covered by several members goes to the member whose best
    entry parent carries the highest relevance; exact ties go to the
    smallest member id.  Raises UnresolvableSharingError when two members
    share an entry parent, and (with complete=True) UncoveredDirectiveError
    when some directive of the graph is covered by nobody.
    """
    members = sorted(set(members))
    for m in members:
        graph.node(m)
    cover = _cover_map(graph, members)
    if complete:
        missing = set(graph.directive_ids) - set(cover)
        if missing:
            raise UncoveredDirectiveError(missing)
    conflicts = sharing_conflicts(graph, members)
    if conflicts:
        raise UnresolvableSharingError(*conflicts[0])

    assignment: dict[str, str] = {}
    for d, owners in sorted(cover.items()):
        if len(owners) == 1:
            assignment[d] = owners[0]
            continue
        best_rel = {
            m: max(graph.relevance(d, p) for p in parent_routes(graph, m, d))
            for m in owners
        }
        top = max(best_rel.values())
        assignment[d] = min(m for m, r in best_rel.items() if r == top)
    return assignment


def owned_directives(membership: Mapping[str, str], member: str) -> tuple[str, ...]:
    return tuple(sorted(d for d, o in membership.items() if o == member))


# -- coupling ----------------------------------------------------------------


def directive_coupling(
    graph: FDGraph, u: str, v: str, owner_of_v: Iterable[str]
) -> Fraction:
    """Chance that a change in directive v ripples back to directive u.

    owner_of_v is the resolved directive set of v's capability; the chance
    that v is the directive touched within it is uniform, and influence
    decays with undirected distance.
    """
    if u == v:
        raise ValueError("coupling is defined between distinct directives")
    for d in (u, v):
        if graph.node(d).kind is not NodeKind.DIRECTIVE:
            raise ValueError(f"{d!r} is not a directive")
    owner = frozenset(owner_of_v)
    if v not in owner:
        raise ValueError(f"{v!r} does not belong to its stated owner set")
    return Fraction(1, len(owner)) / undirected_distance(graph, u, v)


def capability_coupling(
    graph: FDGraph, p: str, q: str, membership: Mapping[str, str]
) -> Fraction:
    """Mean coupling of capability p's directives onto capability q's."""
    if p == q:
        raise ValueError("capability coupling is defined between distinct members")
    d_p = owned_directives(membership, p)
    d_q = owned_directives(membership, q)
    if not d_p:
        raise ValueError(f"capability {p!r} resolves to an empty directive set")
    if not d_q:
        raise ValueError(f"capability {q!r} resolves to an empty directive set")
    pick = Fraction(1, len(d_q))
    total = Fraction(0)
    for di in d_p:
        for dj in d_q:
            total += pick / undirected_distance(graph, di, dj)
    return total / (len(d_p) * len(d_q))


def coupling_matrix(
    graph: FDGraph, members: Iterable[str], membership: Mapping[str, str]
) -> dict[tuple[str, str], Fraction]:
    """Capability coupling for every ordered pair of members."""
    members = sorted(set(members))
    out: dict[tuple[str, str], Fraction] = {}
    for p in members:
        for q in members:
            if p != q:
                out[(p, q)] = capability_coupling(graph, p, q, membership)
    return out
