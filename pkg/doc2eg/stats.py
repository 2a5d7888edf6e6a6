"""
Corpus statistics: how often responses were unparseable or proposed
cycles, and how large the generated graphs are.
"""
from typing import Dict, Iterable, List, NamedTuple, Sequence

from doc2eg.graph import (
    RELATION_ORDER,
    EventGraphBundle,
    RelationType,
    detect_cycle,
    event_key,
    transitive_closure,
)
from doc2eg.pipeline import PipelineTrace
from doc2eg.responses import ParseStatus


class RelationFormatCounts(NamedTuple):
    format_error: int
    cycle: int


class FormatStats(NamedTuple):
    total: int
    format_error: int
    cycle: int
    per_relation: Dict[RelationType, RelationFormatCounts]

    @property
    def format_error_percent(self) -> float:
        return self.format_error / self.total * 100

    @property
    def cycle_percent(self) -> float:
        return self.cycle / self.total * 100

    def to_dict(self):
        return {
            "documents": self.total,
            "format_error": self.format_error,
            "format_error_percent": self.format_error_percent,
            "cycle": self.cycle,
            "cycle_percent": self.cycle_percent,
            "relations": {
                relation.value: {
                    "format_error": counts.format_error,
                    "format_error_percent": counts.format_error / self.total * 100,
                    "cycle": counts.cycle,
                    "cycle_percent": counts.cycle / self.total * 100,
                }
                for relation, counts in self.per_relation.items()
            },
        }


def _relation_flags(relation_trace) -> RelationFormatCounts:
    format_error = any(
        round_trace.parse_status == ParseStatus.FORMAT_ERROR
        for round_trace in relation_trace.rounds
    )
    cycle = False
    kept_so_far: List = list()
    for round_trace in relation_trace.rounds:
        proposed = kept_so_far + [
            (event_key(head), event_key(tail)) for head, tail in round_trace.generated
        ]
        if detect_cycle(proposed) is not None:
            cycle = True
            break
        kept_so_far.extend(
            (event_key(head), event_key(tail)) for head, tail in round_trace.retained
        )
    return RelationFormatCounts(int(format_error), int(cycle))


def compute_format_stats(traces: Iterable[PipelineTrace]) -> FormatStats:
    """
    Count the documents with a format error in any round, and those where
    some round's proposed edges (together with the edges kept before it)
    contain a cycle.
    """
    total = 0
    format_error_docs = 0
    cycle_docs = 0
    per_relation = {relation: [0, 0] for relation in RELATION_ORDER}
    for trace in traces:
        total += 1
        flags = {
            relation: _relation_flags(relation_trace)
            for relation, relation_trace in trace.relations.items()
        }
        for relation, counts in flags.items():
            per_relation[relation][0] += counts.format_error
            per_relation[relation][1] += counts.cycle
        format_error_docs += any(counts.format_error for counts in flags.values())
        cycle_docs += any(counts.cycle for counts in flags.values())

    if total == 0:
        raise ValueError("format statistics need at least one trace")
    return FormatStats(
        total=total,
        format_error=format_error_docs,
        cycle=cycle_docs,
        per_relation={
            relation: RelationFormatCounts(*counts)
            for relation, counts in per_relation.items()
        },
    )


class RunAverage(NamedTuple):
    runs: int
    format_error_percent: float
    cycle_percent: float

    def to_dict(self):
        return self._asdict()


def average_format_stats(runs: Sequence[FormatStats]) -> RunAverage:
    if not runs:
        raise ValueError("nothing to average")
    return RunAverage(
        runs=len(runs),
        format_error_percent=sum(run.format_error_percent for run in runs) / len(runs),
        cycle_percent=sum(run.cycle_percent for run in runs) / len(runs),
    )


class GraphStatistics(NamedTuple):
    documents: int
    mean_events: float
    edges: Dict[RelationType, int]
    closure: bool

    def mean_edges(self, relation: RelationType) -> float:
        return self.edges[relation] / self.documents if self.documents else 0.0

    def share(self, relation: RelationType) -> float:
        total = sum(self.edges.values())
        return self.edges[relation] / total * 100 if total else 0.0

    def to_dict(self):
        return {
            "documents": self.documents,
            "mean_events": self.mean_events,
            "closure": self.closure,
            "relations": {
                relation.value: {
                    "edges": count,
                    "mean_per_document": self.mean_edges(relation),
                    "percent": self.share(relation),
                }
                for relation, count in self.edges.items()
            },
        }


def graph_statistics(
    bundles: Iterable[EventGraphBundle], closure: bool = True
) -> GraphStatistics:
    documents = 0
    events = 0
    edges = {relation: 0 for relation in RELATION_ORDER}
    for bundle in bundles:
        documents += 1
        events += len(bundle.events)
        for relation in RELATION_ORDER:
            graph = bundle.graph(relation)
            if closure:
                graph = transitive_closure(graph)
            edges[relation] += len(graph.edges)
    return GraphStatistics(
        documents=documents,
        mean_events=events / documents if documents else 0.0,
        edges=edges,
        closure=closure,
    )
