import json
import random
from fractions import Fraction

import pytest

from capslice.graph import (
    EdgeKind,
    FDGraph,
    GraphError,
    GraphParseError,
    IMPACT_RELEVANCE,
    Node,
    NodeKind,
    UnknownNodeError,
    ancestors,
    build_graph,
    descendants,
    export_dot,
    impact_category,
    leaves_of,
    parse_graph,
    serialize_graph,
    topological_order,
    undirected_distance,
    validate,
)
from conftest import random_fd_graph
from oracles import bfs_distance, reachable_leaves


def test_fig2_shape(fig2):
    assert fig2.n_nodes == 24
    assert len(fig2.edges()) == 27
    assert fig2.mission_ids == ("m",)
    assert len(fig2.function_ids) == 9
    assert len(fig2.directive_ids) == 14
    assert fig2.node("m").label == "system mission"
    assert fig2.node("n_1").label == ""


def test_fig2_edge_kinds(fig2):
    assert fig2.edge_kind("m", "n_1") is EdgeKind.DECOMPOSITION
    assert fig2.edge_kind("n_4", "n_9") is EdgeKind.REFINEMENT
    assert fig2.edge_kind("n_5", "d_3") is EdgeKind.INTERSECTION
    assert fig2.edge_kind("n_6", "d_3") is EdgeKind.INTERSECTION
    assert fig2.edge_kind("n_8", "d_13") is EdgeKind.INTERSECTION
    assert fig2.edge_kind("n_9", "d_14") is EdgeKind.INTERSECTION
    assert fig2.edge_kind("n_5", "d_1") is EdgeKind.DECOMPOSITION


def test_edge_kinds_follow_degrees(fig2):
    # the stored kind of every edge must match what the degrees imply
    for u, v, kind in fig2.edges():
        if len(fig2.children(u)) == 1:
            expected = EdgeKind.REFINEMENT
        elif len(fig2.parents(v)) >= 2:
            expected = EdgeKind.INTERSECTION
        else:
            expected = EdgeKind.DECOMPOSITION
        assert kind is expected, (u, v)


def test_category_parsing(fig2):
    assert fig2.relevance("d_1", "n_5") == Fraction(3, 10)
    assert fig2.relevance("d_6", "n_7") == Fraction(1)
    assert fig2.relevance("d_9", "n_7") == Fraction(1, 10)
    assert fig2.relevance("d_3", "n_5") > fig2.relevance("d_3", "n_6")


def test_impact_table_exact():
    assert IMPACT_RELEVANCE["catastrophic"] == Fraction(1)
    assert IMPACT_RELEVANCE["critical"] == Fraction(7, 10)
    assert IMPACT_RELEVANCE["marginal"] == Fraction(3, 10)
    assert IMPACT_RELEVANCE["negligible"] == Fraction(1, 10)
    assert impact_category(Fraction(7, 10)) == "critical"
    assert impact_category(Fraction(1, 2)) is None


def test_numeric_relevance_is_exact():
    g = parse_graph(
        json.dumps(
            {
                "nodes": [
                    {"id": "m", "kind": "mission"},
                    {"id": "f", "kind": "function"},
                    {"id": "a", "kind": "directive"},
                    {"id": "b", "kind": "directive"},
                ],
                "edges": [
                    {"from": "m", "to": "f"},
                    {"from": "f", "to": "a", "relevance": 0.3},
                    {"from": "f", "to": "b", "relevance": 1},
                ],
            }
        )
    )
    # 0.3 must mean exactly 3/10, not the nearest binary float
    assert g.relevance("a", "f") == Fraction(3, 10)
    assert g.relevance("b", "f") == Fraction(1)


def test_parse_syntax_error_carries_position():
    with pytest.raises(GraphParseError) as err:
        parse_graph('{"nodes": [}')
    assert err.value.line == 1
    assert err.value.column is not None


@pytest.mark.parametrize(
    "doc",
    [
        '["not", "an", "object"]',
        '{"nodes": []}',
        '{"nodes": {}, "edges": []}',
        '{"nodes": [{"id": "m"}], "edges": []}',
        '{"nodes": [{"id": "m", "kind": "mission"}], "edges": [{"from": "m"}]}',
    ],
)
def test_parse_structure_errors(doc):
    with pytest.raises(GraphParseError):
        parse_graph(doc)


def _tiny(edge_extras):
    return {
        "nodes": [
            {"id": "m", "kind": "mission"},
            {"id": "f", "kind": "function"},
            {"id": "d", "kind": "directive"},
        ],
        "edges": [{"from": "m", "to": "f"}, dict({"from": "f", "to": "d"}, **edge_extras)],
    }


def test_parse_relevance_range():
    with pytest.raises(GraphParseError, match="outside"):
        parse_graph(json.dumps(_tiny({"relevance": 1.5})))
    with pytest.raises(GraphParseError, match="outside"):
        parse_graph(json.dumps(_tiny({"relevance": -0.1})))


def test_parse_unknown_category():
    with pytest.raises(GraphParseError, match="category"):
        parse_graph(json.dumps(_tiny({"relevance": "dire"})))


def test_parse_relevance_on_function_edge():
    doc = _tiny({"relevance": 0.7})
    doc["edges"][0]["relevance"] = 0.5
    with pytest.raises(GraphParseError, match="non-directive"):
        parse_graph(json.dumps(doc))


def test_parse_duplicate_node():
    doc = _tiny({"relevance": 0.7})
    doc["nodes"].append({"id": "f", "kind": "function"})
    with pytest.raises(GraphParseError, match="duplicate"):
        parse_graph(json.dumps(doc))


def test_parse_unknown_edge_endpoint():
    doc = _tiny({"relevance": 0.7})
    doc["edges"].append({"from": "f", "to": "ghost"})
    with pytest.raises(GraphParseError, match="unknown node"):
        parse_graph(json.dumps(doc))


def test_parse_duplicate_edge():
    doc = _tiny({"relevance": 0.7})
    doc["edges"].append({"from": "m", "to": "f"})
    with pytest.raises(GraphParseError, match="duplicate edge"):
        parse_graph(json.dumps(doc))


def test_parse_self_loop():
    doc = _tiny({"relevance": 0.7})
    doc["edges"].append({"from": "f", "to": "f"})
    with pytest.raises(GraphParseError, match="self loop"):
        parse_graph(json.dumps(doc))


# -- validate -------------------------------------------------------------


def test_validate_fig2_ok(fig2):
    report = validate(fig2)
    assert report.ok
    assert report.violations == ()


def _fig2_parts(fig2):
    nodes = [fig2.node(n) for n in fig2.node_ids]
    edges = []
    for u, v, kind in fig2.edges():
        rel = None
        if fig2.node(v).kind is NodeKind.DIRECTIVE:
            rel = fig2.relevance(v, u)
        edges.append([u, v, None, rel])
    return nodes, edges


def test_validate_cycle(fig2):
    nodes, edges = _fig2_parts(fig2)
    edges.append(["d_1", "n_5", None, None])
    report = validate(build_graph(nodes, edges))
    codes = {v.code for v in report.violations}
    assert "CYCLE" in codes
    assert "NODE_DEGREE" in codes  # d_1 now has a child


def test_validate_mission_count():
    g = build_graph(
        [("a", "function"), ("d", "directive")], [("a", "d", None, Fraction(1, 2))]
    )
    assert "MISSION_COUNT" in {v.code for v in validate(g).violations}

    g2 = build_graph(
        [("m1", "mission"), ("m2", "mission"), ("d", "directive"), ("e", "directive")],
        [("m1", "d", None, Fraction(1, 2)), ("m2", "e", None, Fraction(1, 2))],
    )
    assert "MISSION_COUNT" in {v.code for v in validate(g2).violations}


def test_validate_degree_rules():
    # dangling function: no parents, no children, also unreachable
    g = build_graph(
        [("m", "mission"), ("f", "function"), ("d", "directive")],
        [("m", "d", None, Fraction(1, 2))],
    )
    report = validate(g)
    codes = {v.code for v in report.violations}
    assert "NODE_DEGREE" in codes
    assert "UNREACHABLE" in codes
    subjects = {v.subject for v in report.violations if v.code == "NODE_DEGREE"}
    assert "f" in subjects


def test_validate_reports_all_violations():
    # one graph, several independent problems, all listed at once
    g = build_graph(
        [
            ("m", "mission"),
            ("m2", "mission"),
            ("f", "function"),
            ("d", "directive"),
        ],
        [("m", "d", None, Fraction(1, 2))],
    )
    report = validate(g)
    codes = {v.code for v in report.violations}
    assert {"MISSION_COUNT", "NODE_DEGREE", "UNREACHABLE"} <= codes
    assert len(report.violations) >= 3


def test_validate_edge_kind_mismatch(fig2):
    nodes, edges = _fig2_parts(fig2)
    for e in edges:
        if e[0] == "n_4" and e[1] == "n_9":
            e[2] = "decomposition"  # degrees say refinement
    report = validate(build_graph(nodes, edges))
    bad = [v for v in report.violations if v.code == "EDGE_KIND"]
    assert len(bad) == 1
    assert bad[0].subject == "n_4->n_9"
    assert "refinement" in bad[0].message


def test_validate_missing_relevance():
    g = build_graph(
        [("m", "mission"), ("f", "function"), ("a", "directive"), ("b", "directive")],
        [("m", "f"), ("f", "a", None, Fraction(1, 2)), ("f", "b")],
    )
    report = validate(g)
    bad = [v for v in report.violations if v.code == "RELEVANCE_MISSING"]
    assert [v.subject for v in bad] == ["f->b"]


def test_validate_relevance_extra_and_range():
    # the public builders refuse these, so feed the constructor directly
    nodes = {
        "m": Node("m", NodeKind.MISSION),
        "f": Node("f", NodeKind.FUNCTION),
        "d": Node("d", NodeKind.DIRECTIVE),
    }
    kinds = {("m", "f"): EdgeKind.REFINEMENT, ("f", "d"): EdgeKind.REFINEMENT}
    g = FDGraph(nodes, kinds, {("d", "f"): Fraction(3, 2), ("d", "m"): Fraction(1, 2)})
    codes = {v.code for v in validate(g).violations}
    assert "RELEVANCE_RANGE" in codes
    assert "RELEVANCE_EXTRA" in codes


# -- queries ----------------------------------------------------------------


def test_leaves_of_fig2(fig2):
    assert leaves_of(fig2, "n_3") == frozenset({"d_10", "d_11", "d_12", "d_13", "d_14"})
    assert leaves_of(fig2, "d_7") == frozenset({"d_7"})
    assert leaves_of(fig2, "m") == frozenset(fig2.directive_ids)
    # d_3 is shared below n_1 but counts once
    assert len(leaves_of(fig2, "n_1")) == 5


def test_ancestors_descendants_fig2(fig2):
    assert ancestors(fig2, "d_3") == frozenset({"n_5", "n_6", "n_1", "n_2", "m"})
    assert descendants(fig2, "n_1") == frozenset(
        {"n_5", "n_6", "d_1", "d_2", "d_3", "d_4", "d_5"}
    )
    assert ancestors(fig2, "m") == frozenset()


def test_distance_fig2(fig2):
    assert undirected_distance(fig2, "d_1", "d_2") == 2
    assert undirected_distance(fig2, "d_1", "d_9") == 6
    assert undirected_distance(fig2, "d_3", "d_4") == 2
    assert undirected_distance(fig2, "n_5", "n_5") == 0
    assert undirected_distance(fig2, "d_9", "d_1") == 6


def test_unknown_node_raises(fig2):
    with pytest.raises(UnknownNodeError):
        fig2.node("nope")
    with pytest.raises(UnknownNodeError):
        leaves_of(fig2, "nope")
    with pytest.raises(UnknownNodeError):
        undirected_distance(fig2, "d_1", "nope")


def test_topological_order(fig2):
    order = topological_order(fig2)
    pos = {n: i for i, n in enumerate(order)}
    for u, v, _ in fig2.edges():
        assert pos[u] < pos[v]

    cyclic = build_graph(
        [("m", "mission"), ("a", "function"), ("b", "function"), ("d", "directive")],
        [("m", "a"), ("a", "b"), ("b", "a"), ("b", "d", None, Fraction(1, 2))],
    )
    with pytest.raises(GraphError):
        topological_order(cyclic)


def test_queries_match_oracles_on_random_graphs():
    rng = random.Random(1107)
    for _ in range(25):
        g = random_fd_graph(rng, max_internal=10, max_directives=14)
        for n in g.node_ids:
            assert leaves_of(g, n) == frozenset(reachable_leaves(g, n)), n
        ids = list(g.node_ids)
        for _ in range(15):
            u, v = rng.choice(ids), rng.choice(ids)
            assert undirected_distance(g, u, v) == bfs_distance(g, u, v)
            assert undirected_distance(g, u, v) == undirected_distance(g, v, u)


def test_leaf_ancestor_duality():
    rng = random.Random(2214)
    for _ in range(15):
        g = random_fd_graph(rng, max_internal=8, max_directives=10)
        for n in g.function_ids:
            for d in g.directive_ids:
                assert (d in leaves_of(g, n)) == (n in ancestors(g, d))


# -- round trip and rendering -------------------------------------------------


def test_serialize_roundtrip(fig2):
    assert parse_graph(serialize_graph(fig2)) == fig2


def test_serialize_roundtrip_random():
    rng = random.Random(355)
    for _ in range(20):
        g = random_fd_graph(rng, max_internal=10, max_directives=12)
        again = parse_graph(serialize_graph(g))
        assert again == g
        assert parse_graph(serialize_graph(again)) == again


def test_export_dot_plain(fig2):
    dot = export_dot(fig2)
    assert dot.startswith("digraph")
    assert dot.count("shape=") == 24
    assert dot.count(" -> ") == 27
    assert "style=dashed" in dot  # the refinement edge
    assert "style=dotted" in dot  # intersection edges
    assert '"0.3000"' in dot  # relevance label
    assert "filled" not in dot


def test_export_dot_annotated(fig2):
    from capslice.slicing import make_slice, slice_objective

    slc = make_slice(fig2, ["n_1", "n_7", "n_3"])
    dot = export_dot(fig2, slice_objective(fig2, slc))
    assert dot.count("fillcolor=lightblue") == 3
    assert 'xlabel="Ch=0.5250"' in dot  # n_7
    assert 'label="f = ' in dot


def test_export_dot_single_node():
    g = build_graph([("m", "mission")], [])
    dot = export_dot(g)
    assert dot.count("shape=") == 1
    assert "peripheries=2" in dot
