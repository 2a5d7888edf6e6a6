import itertools
import json
import random

import networkx as nx
import pytest

import doc2eg.graph as g
from doc2eg.prompts import add_edge_call
from doc2eg.responses import parse_graph_response
from test_package.utils import (
    CAUSAL,
    HIERARCHICAL,
    TEMPORAL,
    bundle,
    edge,
    events,
    graph,
)


def test_event_normalizes_whitespace_and_compares_casefolded():
    event = g.Event("  The   Government  cut\nspending ")

    assert event.text == "The Government cut spending"
    assert event == g.Event("the government CUT spending")
    assert hash(event) == hash(g.Event("the government cut spending"))


def test_event_rejects_empty_text():
    with pytest.raises(g.GraphError):
        g.Event("   ")


def test_relation_edge_rejects_self_loop():
    with pytest.raises(g.SelfLoopError):
        edge("A", "a")


def test_relation_type_from_name():
    assert g.RelationType.from_name("temporal") == TEMPORAL
    assert g.RelationType.from_name("caused_by") == CAUSAL
    with pytest.raises(ValueError):
        g.RelationType.from_name("before")


def test_detect_cycle_chain_is_acyclic():
    assert g.detect_cycle([edge("A", "B"), edge("B", "C")]) is None


def test_detect_cycle_two_cycle():
    cycle = g.detect_cycle([edge("A", "B"), edge("B", "A")])

    assert cycle == events("A", "B")


def test_detect_cycle_accepts_plain_pairs():
    assert g.detect_cycle([("a", "b"), ("b", "c"), ("c", "a")]) is not None
    assert g.detect_cycle([("a", "b"), ("a", "c")]) is None


def test_detect_cycle_accepts_a_relation_graph():
    chain = graph("ABCD", [("A", "B"), ("B", "C")])

    assert g.detect_cycle(chain) is None
    assert g.detect_cycle(g.merge_edges(chain, [edge("C", "A")]).graph) is None
    assert g.detect_cycle(chain, nodes=events("A", "B", "C")) is None


def _has_cycle_brute_force(node_count, pairs):
    successors = {node: set() for node in range(node_count)}
    for head, tail in pairs:
        successors[head].add(tail)

    def reaches(start, target):
        seen, stack = set(), [start]
        while stack:
            node = stack.pop()
            for successor in successors[node]:
                if successor == target:
                    return True
                if successor not in seen:
                    seen.add(successor)
                    stack.append(successor)
        return False

    return any(reaches(node, node) for node in range(node_count))


def test_detect_cycle_agrees_with_path_search_on_random_digraphs():
    rng = random.Random(7)
    all_pairs = [(a, b) for a in range(8) for b in range(8) if a != b]
    for _ in range(50):
        pairs = rng.sample(all_pairs, rng.randint(0, 14))
        witness = g.detect_cycle(pairs, nodes=range(8))

        assert (witness is not None) == _has_cycle_brute_force(8, pairs)
        if witness is not None:
            closing = list(zip(witness, witness[1:] + witness[:1]))
            assert all(pair in pairs for pair in closing)


def test_relation_graph_rejects_cycles():
    with pytest.raises(g.CycleError) as excinfo:
        graph("ABC", [("A", "B"), ("B", "C"), ("C", "A")])

    assert set(excinfo.value.cycle) == set(events("A", "B", "C"))


def test_relation_graph_rejects_duplicates_and_unknown_endpoints():
    with pytest.raises(g.DuplicateEdgeError):
        graph("AB", [("A", "B"), ("a", "b")])
    with pytest.raises(g.UnknownEventError):
        graph("AB", [("A", "C")])


def test_relation_graph_rejects_edges_of_another_relation():
    with pytest.raises(g.GraphError):
        g.RelationGraph(TEMPORAL, events("A", "B"), [edge("A", "B", CAUSAL)])


def test_transitive_closure_two_hop_chain():
    closed = g.transitive_closure(graph("ABC", [("A", "B"), ("B", "C")]))

    assert set(closed.edges) == {edge("A", "B"), edge("B", "C"), edge("A", "C")}


def test_transitive_closure_of_empty_graph():
    closed = g.transitive_closure(graph("ABC"))

    assert closed.edges == ()
    assert set(closed.nodes) == set(events("A", "B", "C"))


def test_transitive_closure_matches_reachability_on_random_dags():
    rng = random.Random(11)
    nodes = [str(index) for index in range(6)]
    for _ in range(30):
        # forward pairs only, so the graph is a DAG
        pairs = [
            (nodes[i], nodes[j])
            for i, j in itertools.combinations(range(6), 2)
            if rng.random() < 0.3
        ]
        closed = g.transitive_closure(graph(nodes, pairs))

        expected = set()
        for start in nodes:
            stack, seen = [start], set()
            while stack:
                current = stack.pop()
                for head, tail in pairs:
                    if head == current and tail not in seen:
                        seen.add(tail)
                        stack.append(tail)
            expected |= {(start, reached) for reached in seen}
        assert {(e.head.text, e.tail.text) for e in closed.edges} == expected


def test_merge_edges_adds_new_edge():
    result = g.merge_edges(graph("ABC", [("A", "B")]), [edge("B", "C")])

    assert set(result.graph.edges) == {edge("A", "B"), edge("B", "C")}
    assert result.added == [edge("B", "C")]
    assert result.rejected == []


def test_merge_edges_rejects_edge_closing_a_cycle():
    result = g.merge_edges(graph("AB", [("A", "B")]), [edge("B", "A")])

    assert set(result.graph.edges) == {edge("A", "B")}
    assert result.rejected_for(g.RejectionReason.CYCLE) == [edge("B", "A")]


def test_merge_edges_rejects_duplicate():
    original = graph("AB", [("A", "B")])
    result = g.merge_edges(original, [edge("A", "B")])

    assert result.graph == original
    assert result.rejected_for(g.RejectionReason.DUPLICATE) == [edge("A", "B")]
    assert result.added == []


def test_merge_edges_is_order_dependent():
    empty = graph("AB")

    forward = g.merge_edges(empty, [edge("A", "B"), edge("B", "A")])
    backward = g.merge_edges(empty, [edge("B", "A"), edge("A", "B")])

    assert forward.added == [edge("A", "B")]
    assert backward.added == [edge("B", "A")]


def test_merge_edges_unknown_endpoint():
    with pytest.raises(g.UnknownEventError):
        g.merge_edges(graph("AB"), [edge("A", "Z")])


def test_parsed_and_merged_rounds_stay_acyclic_with_every_rejection_explained():
    rng = random.Random(1000)
    nodes = events(*"ABCDEF")
    all_pairs = [(a, b) for a in "ABCDEF" for b in "ABCDEF" if a != b]
    for _ in range(1000):
        stored = g.empty_graph(TEMPORAL, nodes)
        for _round in range(rng.randint(1, 3)):
            proposed = rng.choices(all_pairs, k=rng.randint(0, 10))
            response = "temporal_graph = nx.DiGraph()\n" + "\n".join(
                add_edge_call("temporal_graph", edge(head, tail))
                for head, tail in proposed
            )

            parsed = parse_graph_response(response, nodes, TEMPORAL)
            expected = list(dict.fromkeys(proposed))
            assert [(h.text, t.text) for h, t in parsed.edges] == expected

            candidates = [g.RelationEdge(h, t, TEMPORAL) for h, t in parsed.edges]
            result = g.merge_edges(stored, candidates)

            assert g.detect_cycle(result.graph) is None
            assert sorted(result.added + result.rejected, key=repr) == sorted(
                candidates, key=repr
            )
            assert result.graph.edges == stored.edges + tuple(result.added)
            reachable = result.graph.to_networkx()
            for rejection in result.rejections:
                rejected = rejection.edge
                if rejection.reason == g.RejectionReason.DUPLICATE:
                    assert rejected in stored
                else:
                    assert rejection.reason == g.RejectionReason.CYCLE
                    assert rejected not in stored
                    assert nx.has_path(reachable, rejected.tail, rejected.head)
            stored = result.graph


def test_bundle_fills_missing_relations_with_empty_graphs():
    result = bundle("doc-1", ["A", "B"], {TEMPORAL: [("A", "B")]})

    assert result.graph(HIERARCHICAL).edges == ()
    assert result.graph(CAUSAL).edges == ()
    assert result.edges() == [edge("A", "B")]


def test_bundle_requires_shared_node_set():
    with pytest.raises(g.GraphError):
        g.EventGraphBundle(
            "doc-1",
            graph("AB", relation=HIERARCHICAL),
            graph("ABC", relation=TEMPORAL),
            graph("AB", relation=CAUSAL),
        )


def test_bundle_json_is_canonical():
    result = bundle(
        "doc-1",
        ["b event", "a event", "c event"],
        {
            CAUSAL: [("c event", "a event")],
            TEMPORAL: [("b event", "c event"), ("a event", "b event")],
        },
    )

    assert json.loads(result.to_json()) == {
        "document_id": "doc-1",
        "events": ["a event", "b event", "c event"],
        "relations": [
            {"head": "c event", "relation": "caused_by", "tail": "a event"},
            {"head": "a event", "relation": "happened_before", "tail": "b event"},
            {"head": "b event", "relation": "happened_before", "tail": "c event"},
        ],
    }
    assert g.EventGraphBundle.from_json(result.to_json()) == result
    assert g.EventGraphBundle.from_json(result.to_json()).to_json() == result.to_json()


def test_bundle_from_dict_reports_cycle():
    data = {
        "document_id": "doc-1",
        "events": ["A", "B"],
        "relations": [
            {"head": "A", "relation": "happened_before", "tail": "B"},
            {"head": "B", "relation": "happened_before", "tail": "A"},
        ],
    }
    with pytest.raises(g.CycleError) as excinfo:
        g.EventGraphBundle.from_dict(data)

    assert "A -> B -> A" in str(excinfo.value) or "B -> A -> B" in str(excinfo.value)


@pytest.mark.parametrize(
    "data",
    [
        [],
        {"document_id": "doc-1", "events": ["A"]},
        {"document_id": 1, "events": [], "relations": []},
        {"document_id": "d", "events": ["A", "a"], "relations": []},
        {
            "document_id": "d",
            "events": ["A", "B"],
            "relations": [{"head": "A", "relation": "before", "tail": "B"}],
        },
        {
            "document_id": "d",
            "events": ["A", "B"],
            "relations": [{"head": "A", "relation": "caused_by", "tail": "C"}],
        },
        {
            "document_id": "d",
            "events": ["A"],
            "relations": [{"head": "A", "relation": "caused_by", "tail": "A"}],
        },
    ],
)
def test_bundle_from_dict_rejects_malformed_input(data):
    with pytest.raises(g.BundleFormatError):
        g.EventGraphBundle.from_dict(data)


def test_bundle_from_json_rejects_invalid_json():
    with pytest.raises(g.BundleFormatError):
        g.EventGraphBundle.from_json("{not json")
