import pytest

import doc2eg.stats as stats
from doc2eg.pipeline import PipelineTrace, RelationTrace, RoundTrace
from doc2eg.responses import ParseStatus
from test_package.utils import CAUSAL, HIERARCHICAL, TEMPORAL, bundle


def trace(document_id, rounds_by_relation):
    return PipelineTrace(
        document_id,
        events=["A", "B", "C"],
        relations={
            relation: RelationTrace(relation, rounds)
            for relation, rounds in rounds_by_relation.items()
        },
    )


def clean_round(number=1):
    return RoundTrace(
        number, ParseStatus.OK, generated=[("A", "B")], retained=[("A", "B")]
    )


def format_error_round(number=1):
    return RoundTrace(number, ParseStatus.FORMAT_ERROR)


def test_format_error_percentage():
    traces = [
        trace(
            f"doc-{index}",
            {TEMPORAL: [format_error_round() if index < 3 else clean_round()]},
        )
        for index in range(100)
    ]

    result = stats.compute_format_stats(traces)

    assert result.total == 100
    assert result.format_error == 3
    assert result.format_error_percent == pytest.approx(3.0)
    assert result.per_relation[TEMPORAL].format_error == 3
    assert result.cycle == 0


def cyclic_round(number=1):
    return RoundTrace(
        number,
        ParseStatus.OK,
        generated=[("A", "B"), ("B", "C"), ("C", "A")],
        retained=[("A", "B"), ("B", "C")],
        rejected_cycle=[("C", "A")],
    )


def test_format_error_and_cycle_percentages_over_a_hundred_documents():
    rounds = {0: [format_error_round()], 1: [format_error_round()]}
    rounds[2] = [clean_round(), format_error_round(2)]
    rounds[40] = [cyclic_round()]
    rounds[41] = [clean_round(), RoundTrace(2, ParseStatus.OK, generated=[("B", "A")])]
    traces = [
        trace(f"doc-{index}", {CAUSAL: rounds.get(index, [clean_round()])})
        for index in range(100)
    ]

    result = stats.compute_format_stats(traces)

    assert result.format_error_percent == pytest.approx(3.0)
    assert result.cycle == 2
    assert result.cycle_percent == pytest.approx(2.0)
    relation_stats = result.to_dict()["relations"][CAUSAL.value]
    assert relation_stats["cycle_percent"] == pytest.approx(2.0)


def test_document_counts_once_across_relations():
    traces = [
        trace(
            "doc",
            {
                HIERARCHICAL: [format_error_round()],
                TEMPORAL: [clean_round(), format_error_round(2)],
            },
        ),
        trace("other", {HIERARCHICAL: [clean_round()]}),
    ]

    result = stats.compute_format_stats(traces)

    assert result.format_error == 1
    assert result.format_error_percent == pytest.approx(50.0)
    assert result.per_relation[HIERARCHICAL].format_error == 1
    assert result.per_relation[TEMPORAL].format_error == 1
    assert result.per_relation[CAUSAL].format_error == 0


def test_cycle_within_one_round():
    rounds = [
        RoundTrace(
            1,
            ParseStatus.OK,
            generated=[("A", "B"), ("B", "A")],
            retained=[("A", "B")],
            rejected_cycle=[("B", "A")],
        )
    ]

    result = stats.compute_format_stats([trace("doc", {CAUSAL: rounds})])

    assert result.cycle == 1
    assert result.per_relation[CAUSAL].cycle == 1


def test_cycle_against_edges_kept_earlier():
    rounds = [
        RoundTrace(1, ParseStatus.OK, generated=[("A", "B")], retained=[("A", "B")]),
        RoundTrace(2, ParseStatus.OK, generated=[("b", "a")]),
    ]
    clean = [clean_round(), RoundTrace(2, ParseStatus.OK, generated=[("B", "C")])]

    result = stats.compute_format_stats(
        [trace("doc", {TEMPORAL: rounds}), trace("clean", {TEMPORAL: clean})]
    )

    assert result.cycle == 1
    assert result.cycle_percent == pytest.approx(50.0)


def test_format_stats_need_traces():
    with pytest.raises(ValueError):
        stats.compute_format_stats([])


def test_format_stats_to_dict():
    result = stats.compute_format_stats(
        [trace("doc", {TEMPORAL: [format_error_round()]})]
    )

    data = result.to_dict()

    assert data["documents"] == 1
    assert data["format_error_percent"] == 100.0
    assert data["relations"][TEMPORAL.value]["format_error"] == 1


def test_average_over_runs():
    first = stats.compute_format_stats(
        [trace("a", {TEMPORAL: [format_error_round()]}), trace("b", {})]
    )
    second = stats.compute_format_stats([trace("a", {}), trace("b", {})])

    average = stats.average_format_stats([first, second])

    assert average == stats.RunAverage(2, 25.0, 0.0)
    with pytest.raises(ValueError):
        stats.average_format_stats([])


def test_graph_statistics_with_and_without_closure():
    bundles = [
        bundle(
            "d1", "ABC", {TEMPORAL: [("A", "B"), ("B", "C")], CAUSAL: [("C", "A")]}
        ),
        bundle("d2", "AB"),
    ]

    closed = stats.graph_statistics(bundles)
    raw = stats.graph_statistics(bundles, closure=False)

    assert closed.edges[TEMPORAL] == 3
    assert raw.edges[TEMPORAL] == 2
    assert closed.mean_events == pytest.approx(2.5)
    assert closed.mean_edges(TEMPORAL) == pytest.approx(1.5)
    assert closed.share(CAUSAL) == pytest.approx(25.0)
    assert closed.edges[HIERARCHICAL] == 0


def test_graph_statistics_of_nothing():
    result = stats.graph_statistics([])

    assert result.documents == 0
    assert result.mean_edges(TEMPORAL) == 0.0
    assert result.share(TEMPORAL) == 0.0
