import random
from fractions import Fraction

import pytest

from capslice.graph import NodeKind, build_graph, validate
from capslice.metrics import (
    CohesionUndefinedError,
    UncoveredDirectiveError,
    UnresolvableSharingError,
    capability_coupling,
    cohesion,
    cohesion_map,
    coupling_matrix,
    directive_coupling,
    owned_directives,
    parent_routes,
    resolve_membership,
    sharing_conflicts,
    size_of,
)
from conftest import random_fd_graph
from oracles import cohesion_recursive, double_sum_coupling


def test_size_of(fig2):
    assert size_of(fig2, "n_7") == 4
    assert size_of(fig2, "d_5") == 1
    assert size_of(fig2, "n_1") == 5  # d_3 shared below n_5 and n_6, counted once
    assert size_of(fig2, "n_2") == 7
    assert size_of(fig2, "m") == 14


def test_cohesion_fig2_exact(fig2):
    assert cohesion(fig2, "n_7") == Fraction(21, 40)
    assert cohesion(fig2, "n_5") == Fraction(17, 30)
    assert cohesion(fig2, "n_6") == Fraction(17, 30)
    assert cohesion(fig2, "n_1") == Fraction(17, 30)
    assert cohesion(fig2, "n_2") == Fraction(19, 35)
    assert cohesion(fig2, "n_3") == Fraction(7, 10)
    assert cohesion(fig2, "n_8") == Fraction(7, 10)
    assert cohesion(fig2, "m") == Fraction(173, 285)


def test_cohesion_leaf_parent_is_mean_relevance(fig2):
    # n_7's children are all directives, so cohesion is their plain average
    rels = [fig2.relevance(d, "n_7") for d in fig2.children("n_7")]
    assert cohesion(fig2, "n_7") == sum(rels) / len(rels)


def test_cohesion_refinement_passthrough(fig2):
    # n_4 -> n_9 is a refinement; the single child's cohesion carries up intact
    assert cohesion(fig2, "n_4") == cohesion(fig2, "n_9") == Fraction(7, 10)


def test_cohesion_all_catastrophic_is_one():
    g = build_graph(
        [("m", "mission"), ("a", "directive"), ("b", "directive")],
        [("m", "a", None, "catastrophic"), ("m", "b", None, "catastrophic")],
    )
    assert cohesion(g, "m") == 1


def test_cohesion_undefined_for_directive(fig2):
    with pytest.raises(CohesionUndefinedError):
        cohesion(fig2, "d_1")


def test_cohesion_map_matches_pointwise(fig2):
    ch = cohesion_map(fig2)
    assert set(ch) == set(fig2.mission_ids) | set(fig2.function_ids)
    for n, value in ch.items():
        assert value == cohesion(fig2, n)


def test_cohesion_monotone_in_relevance(fig2):
    def rebuilt(d9_relevance):
        nodes = [fig2.node(n) for n in fig2.node_ids]
        edges = []
        for u, v, _ in fig2.edges():
            rel = None
            if fig2.node(v).kind is NodeKind.DIRECTIVE:
                rel = fig2.relevance(v, u)
            if (u, v) == ("n_7", "d_9"):
                rel = d9_relevance
            edges.append((u, v, None, rel))
        return build_graph(nodes, edges)

    low, high = rebuilt(Fraction(1, 10)), rebuilt(Fraction(7, 10))
    assert cohesion(low, "n_7") == cohesion(fig2, "n_7")
    assert cohesion(high, "n_7") > cohesion(low, "n_7")
    # every ancestor of the edited edge moves the same direction
    assert cohesion(high, "n_2") > cohesion(low, "n_2")
    assert cohesion(high, "m") > cohesion(low, "m")
    # unrelated subtrees are untouched
    assert cohesion(high, "n_3") == cohesion(low, "n_3")


def test_cohesion_matches_recursive_oracle():
    rng = random.Random(4821)
    for _ in range(40):
        g = random_fd_graph(rng, max_internal=12, max_directives=16)
        ch = cohesion_map(g)
        for n in list(g.mission_ids) + list(g.function_ids):
            assert ch[n] == cohesion_recursive(g, n), n


def test_cohesion_bounds():
    rng = random.Random(990)
    for _ in range(30):
        g = random_fd_graph(rng)
        for value in cohesion_map(g).values():
            assert 0 < value <= 1


# -- membership ---------------------------------------------------------------


def test_parent_routes(fig2):
    assert parent_routes(fig2, "n_1", "d_3") == frozenset({"n_5", "n_6"})
    assert parent_routes(fig2, "n_2", "d_3") == frozenset({"n_6"})
    assert parent_routes(fig2, "n_5", "d_3") == frozenset({"n_5"})
    assert parent_routes(fig2, "n_3", "d_1") == frozenset()


def test_resolve_membership_s1(fig2):
    ms = resolve_membership(fig2, ["n_1", "n_3", "n_7"])
    assert owned_directives(ms, "n_1") == ("d_1", "d_2", "d_3", "d_4", "d_5")
    assert owned_directives(ms, "n_7") == ("d_6", "d_7", "d_8", "d_9")
    assert owned_directives(ms, "n_3") == ("d_10", "d_11", "d_12", "d_13", "d_14")


def test_resolve_membership_relevance_winner(fig2):
    # d_3 is reachable from both members; n_5 enters at relevance 7/10,
    # n_2 only through n_6 at 3/10, so n_5 wins
    ms = resolve_membership(fig2, ["n_2", "n_3", "n_5"])
    assert ms["d_3"] == "n_5"
    assert owned_directives(ms, "n_2") == ("d_4", "d_5", "d_6", "d_7", "d_8", "d_9")


def test_resolve_membership_tie_breaks_low_id(fig2):
    # n_3 (via n_8) and n_4 (via n_9) both reach d_13/d_14 at relevance 7/10
    ms = resolve_membership(fig2, ["n_3", "n_4"], complete=False)
    assert ms["d_13"] == "n_3"
    assert ms["d_14"] == "n_3"
    assert owned_directives(ms, "n_4") == ()


def test_resolve_membership_tie_toy():
    g = build_graph(
        [
            ("m", "mission"),
            ("f_a", "function"),
            ("f_b", "function"),
            ("x", "directive"),
            ("y", "directive"),
            ("d", "directive"),
        ],
        [
            ("m", "f_a"),
            ("m", "f_b"),
            ("f_a", "x", None, Fraction(1, 2)),
            ("f_b", "y", None, Fraction(1, 2)),
            ("f_a", "d", None, Fraction(1, 2)),
            ("f_b", "d", None, Fraction(1, 2)),
        ],
    )
    assert validate(g).ok
    ms = resolve_membership(g, ["f_b", "f_a"])
    assert ms["d"] == "f_a"


def test_resolve_membership_unresolvable(fig2):
    # n_1 and n_2 both enter d_3, d_4, d_5 through the same parent n_6
    with pytest.raises(UnresolvableSharingError) as err:
        resolve_membership(fig2, ["n_1", "n_2"], complete=False)
    assert err.value.parent == "n_6"
    assert err.value.members == ("n_1", "n_2")

    conflicts = sharing_conflicts(fig2, ["n_1", "n_2"])
    assert [(d, p) for d, p, _ in conflicts] == [
        ("d_3", "n_6"),
        ("d_4", "n_6"),
        ("d_5", "n_6"),
    ]


def test_resolve_membership_member_inside_member(fig2):
    # an ancestor pair also collides on the nested member's own parents
    with pytest.raises(UnresolvableSharingError):
        resolve_membership(fig2, ["n_1", "n_5"], complete=False)


def test_resolve_membership_coverage(fig2):
    with pytest.raises(UncoveredDirectiveError) as err:
        resolve_membership(fig2, ["n_7"])
    assert "d_1" in err.value.directives

    partial = resolve_membership(fig2, ["n_7"], complete=False)
    assert set(partial) == {"d_6", "d_7", "d_8", "d_9"}


def test_sharing_conflicts_clean_slices(fig2):
    assert sharing_conflicts(fig2, ["n_1", "n_3", "n_7"]) == []
    assert sharing_conflicts(fig2, ["n_2", "n_3", "n_5"]) == []


# -- coupling -----------------------------------------------------------------


def test_directive_coupling_exact(fig2):
    owner = {"d_4", "d_5"}
    assert directive_coupling(fig2, "d_1", "d_4", owner) == Fraction(1, 8)
    assert directive_coupling(fig2, "d_3", "d_4", owner) == Fraction(1, 4)
    # singleton owner set at distance 2
    assert directive_coupling(fig2, "d_1", "d_2", {"d_2"}) == Fraction(1, 2)


def test_directive_coupling_errors(fig2):
    with pytest.raises(ValueError):
        directive_coupling(fig2, "d_1", "d_1", {"d_1"})
    with pytest.raises(ValueError):
        directive_coupling(fig2, "n_5", "d_4", {"d_4"})
    with pytest.raises(ValueError):
        directive_coupling(fig2, "d_1", "d_4", {"d_5"})


def test_capability_coupling_exact(fig2):
    ms = {"d_1": "n_5", "d_2": "n_5", "d_3": "n_5", "d_4": "n_6", "d_5": "n_6"}
    assert capability_coupling(fig2, "n_5", "n_6", ms) == Fraction(1, 6)


def test_capability_coupling_asymmetry(fig2):
    ms = resolve_membership(fig2, ["n_1", "n_9"], complete=False)
    assert owned_directives(ms, "n_1") == ("d_1", "d_2", "d_3", "d_4", "d_5")
    assert owned_directives(ms, "n_9") == ("d_13", "d_14")
    assert capability_coupling(fig2, "n_1", "n_9", ms) == Fraction(1, 12)
    assert capability_coupling(fig2, "n_9", "n_1", ms) == Fraction(1, 30)


def test_capability_coupling_distance_toy():
    g = build_graph(
        [
            ("m", "mission"),
            ("a", "function"),
            ("b", "function"),
            ("c", "function"),
            ("d_a", "directive"),
            ("d_c", "directive"),
        ],
        [
            ("m", "a"),
            ("m", "b"),
            ("a", "d_a", None, Fraction(1, 2)),
            ("b", "c"),
            ("c", "d_c", None, Fraction(1, 2)),
        ],
    )
    ms = {"d_a": "a", "d_c": "c"}
    # single directives five hops apart, owner sets of one
    assert capability_coupling(g, "a", "c", ms) == Fraction(1, 5)
    assert capability_coupling(g, "c", "a", ms) == Fraction(1, 5)


def test_capability_coupling_errors(fig2):
    ms = resolve_membership(fig2, ["n_1", "n_3", "n_7"])
    with pytest.raises(ValueError):
        capability_coupling(fig2, "n_1", "n_1", ms)
    with pytest.raises(ValueError):
        capability_coupling(fig2, "n_1", "n_9", ms)  # n_9 owns nothing here


def test_capability_coupling_matches_double_sum():
    rng = random.Random(7310)
    checked = 0
    for _ in range(60):
        g = random_fd_graph(rng, max_internal=10, max_directives=14)
        funs = list(g.function_ids)
        if len(funs) < 2:
            continue
        pair = rng.sample(funs, 2)
        try:
            ms = resolve_membership(g, pair, complete=False)
        except UnresolvableSharingError:
            continue
        if not owned_directives(ms, pair[0]) or not owned_directives(ms, pair[1]):
            continue
        got = capability_coupling(g, pair[0], pair[1], ms)
        expected = double_sum_coupling(
            g, owned_directives(ms, pair[0]), owned_directives(ms, pair[1])
        )
        assert got == expected
        checked += 1
    assert checked >= 20


def test_coupling_bounds():
    rng = random.Random(5150)
    seen = 0
    for _ in range(40):
        g = random_fd_graph(rng, max_internal=8, max_directives=12)
        dirs = list(g.directive_ids)
        if len(dirs) < 2:
            continue
        u, v = rng.sample(dirs, 2)
        value = directive_coupling(g, u, v, {v})
        assert 0 < value <= Fraction(1, 2)
        seen += 1
    assert seen >= 30


def test_coupling_matrix_keys(fig2):
    members = ["n_1", "n_3", "n_7"]
    ms = resolve_membership(fig2, members)
    matrix = coupling_matrix(fig2, members, ms)
    assert set(matrix) == {(p, q) for p in members for q in members if p != q}
    assert matrix[("n_1", "n_7")] != matrix[("n_7", "n_1")]
