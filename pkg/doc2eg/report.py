"""
Human tables on ``console`` and machine JSON on ``json_output_console`` for
every command's results. ``--output json`` silences the first and enables the
second.
"""
from typing import Any, Dict, Optional, Sequence, Tuple

import rich.table
from rich import box

from doc2eg.console_output import console, json_output_console
from doc2eg.graph import RELATION_ORDER
from doc2eg.hgs import AgreementReport, HgsReport
from doc2eg.saliency import CorpusSaliency
from doc2eg.stats import FormatStats, GraphStatistics, RunAverage


def percent(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}"


def score(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def emit_json(data: Dict[str, Any]):
    json_output_console.print_json(data=data, indent=None)


def print_hgs_report(report: HgsReport, show_documents: bool = False):
    table = rich.table.Table(
        title="Hungarian graph similarity"
        + (" (transitive closure)" if report.closure else ""),
        box=box.SIMPLE,
    )
    table.add_column("Relation")
    table.add_column("HGS", justify="right")
    table.add_column("Precision HGS", justify="right")
    table.add_column("Recall HGS", justify="right")
    table.add_column("Gold edges", justify="right")
    for relation, corpus_score in report.relations.items():
        table.add_row(
            relation.value,
            score(corpus_score.hgs),
            score(corpus_score.phgs),
            score(corpus_score.rhgs),
            str(corpus_score.weight),
        )
    table.add_row(
        "[bold]overall",
        score(report.overall.hgs),
        score(report.overall.phgs),
        score(report.overall.rhgs),
        str(report.overall.weight),
    )
    console.print(table)
    console.print(f"Event HGS: {score(report.event_hgs)}")

    if show_documents:
        documents = rich.table.Table(box=box.SIMPLE)
        documents.add_column("Document")
        documents.add_column("Events", justify="right")
        for relation in report.relations:
            documents.add_column(relation.short_name, justify="right")
        for document in report.documents:
            documents.add_row(
                document.document_id,
                score(document.event_hgs),
                *(score(s.hgs) for s in document.relations.values()),
            )
        console.print(documents)

    emit_json(report.to_dict())


def print_saliency_report(saliency: CorpusSaliency, show_documents: bool = False):
    table = rich.table.Table(title="Event saliency (%)", box=box.SIMPLE)
    table.add_column("Document")
    table.add_column("Events", justify="right")
    table.add_column("Frequency", justify="right")
    table.add_column("First appearance", justify="right")
    table.add_column("Stretch size", justify="right")
    if show_documents:
        for document in saliency.documents:
            table.add_row(
                document.document_id,
                str(document.event_count),
                percent(document.frequency),
                percent(document.first_appearance),
                percent(document.stretch_size),
            )
    table.add_row(
        "[bold]corpus",
        f"{saliency.mean_event_count:.2f}",
        percent(saliency.frequency),
        percent(saliency.first_appearance),
        percent(saliency.stretch_size),
    )
    console.print(table)
    if saliency.excluded_documents:
        console.print(
            f"[yellow]{len(saliency.excluded_documents)} document(s) without events "
            "left out of the feature means"
        )
    emit_json(saliency.to_dict())


def print_format_stats(
    runs: Sequence[Tuple[str, FormatStats]], average: Optional[RunAverage] = None
):
    table = rich.table.Table(title="Format errors and cycles (%)", box=box.SIMPLE)
    table.add_column("Run")
    table.add_column("Documents", justify="right")
    table.add_column("Format error", justify="right")
    table.add_column("Cycle", justify="right")
    for name, stats in runs:
        table.add_row(
            name,
            str(stats.total),
            f"{stats.format_error_percent:.2f}",
            f"{stats.cycle_percent:.2f}",
        )
    if average is not None and average.runs > 1:
        table.add_row(
            f"[bold]mean of {average.runs}",
            "",
            f"{average.format_error_percent:.2f}",
            f"{average.cycle_percent:.2f}",
        )
    console.print(table)

    data: Dict[str, Any] = {"runs": {name: stats.to_dict() for name, stats in runs}}
    if average is not None:
        data["average"] = average.to_dict()
    emit_json(data)


def print_graph_statistics(statistics: GraphStatistics):
    table = rich.table.Table(
        title=f"Generated graphs ({statistics.documents} documents, "
        f"{statistics.mean_events:.2f} events on average)",
        box=box.SIMPLE,
    )
    table.add_column("Relation")
    table.add_column("Edges", justify="right")
    table.add_column("Per document", justify="right")
    table.add_column("Share (%)", justify="right")
    for relation in RELATION_ORDER:
        table.add_row(
            relation.value,
            str(statistics.edges[relation]),
            f"{statistics.mean_edges(relation):.2f}",
            f"{statistics.share(relation):.2f}",
        )
    console.print(table)
    emit_json(statistics.to_dict())


def print_agreement(report: AgreementReport):
    table = rich.table.Table(
        title=f"Agreement over {report.documents} documents", box=box.SIMPLE
    )
    table.add_column("")
    table.add_column("Precision", justify="right")
    table.add_column("Recall", justify="right")
    table.add_column("F1", justify="right")
    rows = [("events", report.events)] + [
        (relation.value, agreement) for relation, agreement in report.relations.items()
    ]
    for name, agreement in rows:
        table.add_row(
            name,
            score(agreement.precision),
            score(agreement.recall),
            score(agreement.f1),
        )
    console.print(table)
    emit_json(report.to_dict())
