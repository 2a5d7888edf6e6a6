import argparse
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
from urllib.parse import quote

import rich.table
from rich import box
from rich_argparse import RichHelpFormatter

from doc2eg import __version__, report
from doc2eg.config import ConfigError, RunConfig, build_gateway
from doc2eg.console_output import (
    console,
    error_console,
    json_output_console,
    log_console,
)
from doc2eg.corpus import (
    RunAction,
    read_bundles,
    read_traces,
    run_corpus,
    write_if_changed,
)
from doc2eg.document import (
    build_sentence_doc,
    filter_documents,
    get_lemmatizer,
    get_splitter,
    read_corpus,
    read_id_list,
)
from doc2eg.graph import CycleError, EventGraphBundle, GraphError
from doc2eg.hgs import EmbeddingLookup, corpus_agreement, corpus_hgs
from doc2eg.pipeline import CascadePipeline
from doc2eg.saliency import (
    corpus_saliency,
    detect_mentions_exact,
    detect_mentions_llm,
    saliency_scores,
)
from doc2eg.stats import average_format_stats, compute_format_stats, graph_statistics
from doc2eg.tui import Doc2egTUI


class ValidationFailed(Exception):
    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class RunFailed(Exception):
    def __init__(self, message, document_ids):
        super().__init__(message)
        self.document_ids = document_ids


def get_common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=Path,
        help="YAML configuration file. Flags override DOC2EG_* environment "
        "variables, which override the file",
    )
    common.add_argument(
        "--output",
        choices=["default", "json"],
        default="default",
        help="print human readable tables or a single JSON document",
    )
    common.add_argument(
        "--debug",
        action="store_true",
        help="print full stack traces for exceptions",
    )
    common.add_argument(
        "--verbose",
        action="store_true",
        help="log dropped edges, cache hits and other diagnostics to stderr",
    )
    return common


def add_relation_argument(parser):
    parser.add_argument(
        "--relation",
        action="append",
        choices=["hierarchical", "temporal", "causal"],
        help="relation type to work on; repeat for several. Default: all three",
    )


def get_parser():
    common = get_common_parser()
    parser = argparse.ArgumentParser(
        prog="doc2eg",
        description="Generate and evaluate salient event relation graphs with LLMs",
        formatter_class=RichHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser(
        "generate",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="generate event graphs for a JSON-lines corpus",
    )
    generate.add_argument(
        "corpus",
        type=Path,
        nargs="?",
        help="JSON-lines corpus with id, body and optional title. "
        "Defaults to paths.corpus from the configuration",
    )
    provider_group = generate.add_argument_group("provider arguments")
    provider_group.add_argument(
        "--provider",
        choices=["http", "scripted"],
        help="http talks to an OpenAI-compatible endpoint; scripted replays fixtures",
    )
    provider_group.add_argument(
        "--endpoint",
        help="base URL of the chat completion API. "
        "Can also be specified as DOC2EG_ENDPOINT environment variable. "
        "The API key is only read from DOC2EG_API_KEY",
    )
    provider_group.add_argument(
        "--model",
        help="model name. Can also be specified as DOC2EG_MODEL environment variable",
    )
    provider_group.add_argument(
        "--fixtures",
        type=Path,
        help="JSON-lines fixtures for the scripted provider",
    )
    provider_group.add_argument(
        "--cache-dir",
        type=Path,
        help="directory for the on-disk response cache",
    )

    pipeline_group = generate.add_argument_group("pipeline arguments")
    pipeline_group.add_argument(
        "--max-rounds",
        type=int,
        help="maximum refinement rounds per relation graph (default 5)",
    )
    pipeline_group.add_argument(
        "--no-early-stop",
        dest="early_stop",
        action="store_const",
        const=False,
        help="run every round even when one adds no edges",
    )
    pipeline_group.add_argument(
        "--no-grader",
        dest="use_grader",
        action="store_const",
        const=False,
        help="keep every parsed edge instead of asking the model to verify it",
    )
    pipeline_group.add_argument(
        "--independent-relations",
        dest="dependent_relations",
        action="store_const",
        const=False,
        help="do not show earlier relation graphs in later graph prompts",
    )
    pipeline_group.add_argument(
        "--prompt-format",
        choices=["python", "json"],
        help="ask for graphs as Python code (default) or as a JSON array",
    )
    pipeline_group.add_argument(
        "--templates-dir",
        type=Path,
        help="directory with prompt templates overriding the bundled ones",
    )
    add_relation_argument(pipeline_group)

    corpus_group = generate.add_argument_group("corpus arguments")
    corpus_group.add_argument(
        "--output-dir", type=Path, help="directory for bundle files (default bundles)"
    )
    corpus_group.add_argument(
        "--manifest",
        type=Path,
        help="manifest file (default manifest.jsonl in the output directory)",
    )
    corpus_group.add_argument(
        "--trace-file", type=Path, help="append per-document traces to this file"
    )
    corpus_group.add_argument(
        "--ids-file",
        type=Path,
        help="only process the document ids listed in this file, one per line",
    )
    corpus_group.add_argument("--min-words", type=int, help="default 100")
    corpus_group.add_argument("--max-words", type=int, help="default 8500")
    corpus_group.add_argument(
        "--parallelism",
        type=int,
        help="number of documents processed at the same time",
    )
    corpus_group.add_argument(
        "--runs",
        type=int,
        default=1,
        help="repeat the run N times into run-1 ... run-N sub-directories",
    )
    corpus_group.add_argument(
        "--dry-run",
        action="store_true",
        help="write the first-round prompts to files instead of calling a model",
    )
    corpus_group.add_argument(
        "--prompts-dir",
        type=Path,
        help="where --dry-run writes prompts (default prompts)",
    )

    eval_hgs = subparsers.add_parser(
        "eval-hgs",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="score predicted bundles against gold bundles",
    )
    eval_hgs.add_argument("gold", type=Path, help="gold bundle file or directory")
    eval_hgs.add_argument("pred", type=Path, help="predicted bundle file or directory")
    eval_hgs.add_argument(
        "--no-closure",
        dest="closure",
        action="store_const",
        const=False,
        help="compare the graphs as given instead of their transitive closures",
    )
    eval_hgs.add_argument(
        "--embedding",
        choices=["hashed", "http"],
        help="embedding backend for event distances",
    )
    eval_hgs.add_argument("--parallelism", type=int)
    eval_hgs.add_argument(
        "--per-document", action="store_true", help="also print per-document scores"
    )
    add_relation_argument(eval_hgs)

    saliency = subparsers.add_parser(
        "saliency",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="measure where the events of each bundle are mentioned",
    )
    saliency.add_argument("corpus", type=Path, help="JSON-lines corpus")
    saliency.add_argument("bundles", type=Path, help="bundle file or directory")
    saliency.add_argument(
        "--mentions",
        choices=["exact", "llm"],
        help="lemma matching (default) or asking the model for mentioning sentences",
    )
    saliency.add_argument("--splitter", choices=["regex", "nltk"])
    saliency.add_argument("--lemmatizer", choices=["naive", "nltk"])
    saliency.add_argument("--per-document", action="store_true")

    stats = subparsers.add_parser(
        "stats",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="format error and cycle rates from trace files, graph sizes from bundles",
    )
    stats.add_argument(
        "traces", type=Path, nargs="*", help="trace files, one per run"
    )
    stats.add_argument("--bundles", type=Path, help="bundle file or directory")
    stats.add_argument(
        "--no-closure", dest="closure", action="store_const", const=False
    )

    agreement = subparsers.add_parser(
        "agreement",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="precision, recall and F1 between two annotations of the same documents",
    )
    agreement.add_argument("first", type=Path)
    agreement.add_argument("second", type=Path)
    agreement.add_argument(
        "--closure",
        action="store_true",
        help="compare transitive closures instead of the annotated edges",
    )
    add_relation_argument(agreement)

    validate = subparsers.add_parser(
        "validate",
        parents=[common],
        formatter_class=RichHelpFormatter,
        help="check bundle files against the bundle format and the DAG constraints",
    )
    validate.add_argument("bundles", type=Path, nargs="+")

    return parser


def _str_or_none(value) -> Optional[str]:
    return None if value is None else str(value)


def load_config(args, overrides: Dict[str, Any]) -> RunConfig:
    return RunConfig.load(args.config, overrides=overrides)


def generate_overrides(args) -> Dict[str, Any]:
    return {
        "provider.kind": args.provider,
        "provider.endpoint": args.endpoint,
        "provider.model": args.model,
        "provider.fixtures": _str_or_none(args.fixtures),
        "paths.cache": _str_or_none(args.cache_dir),
        "paths.corpus": _str_or_none(args.corpus),
        "paths.output": _str_or_none(args.output_dir),
        "paths.manifest": _str_or_none(args.manifest),
        "paths.trace": _str_or_none(args.trace_file),
        "paths.templates": _str_or_none(args.templates_dir),
        "paths.prompts": _str_or_none(args.prompts_dir),
        "pipeline.max_rounds": args.max_rounds,
        "pipeline.early_stop": args.early_stop,
        "pipeline.use_grader": args.use_grader,
        "pipeline.dependent_relations": args.dependent_relations,
        "pipeline.prompt_format": args.prompt_format,
        "pipeline.relations": args.relation,
        "filter.ids_file": _str_or_none(args.ids_file),
        "filter.min_words": args.min_words,
        "filter.max_words": args.max_words,
        "parallelism.documents": args.parallelism,
    }


def select_documents(config: RunConfig):
    corpus_path = config.get("paths.corpus")
    if not corpus_path:
        raise ConfigError("no corpus given (argument or paths.corpus)")
    records = read_corpus(Path(corpus_path))
    ids_file = config.get("filter.ids_file")
    allowed = set(read_id_list(Path(ids_file))) if ids_file else None
    result = filter_documents(
        records,
        int(config.get("filter.min_words")),
        int(config.get("filter.max_words")),
        allowed,
    )
    reasons = Counter(exclusion.reason for exclusion in result.excluded)
    for reason, count in reasons.items():
        log_console.log(f"{count} document(s) excluded: {reason.value}")
    # length exclusions still go through the pipeline so the manifest records them
    selected = [
        record for record in records if allowed is None or record.id in allowed
    ]
    return selected, result


def write_dry_run_prompts(config: RunConfig, documents) -> int:
    prompts_dir = Path(config.get("paths.prompts"))
    library = config.prompt_library()
    relations = config.pipeline_config().relations
    written = 0
    for document in documents:
        document_dir = prompts_dir / quote(document.id, safe="")
        for name, prompt in library.dry_run_prompts(document, relations).items():
            write_if_changed(document_dir / f"{name}.txt", prompt)
            written += 1
    return written


def print_run_summary(actions: Counter, output_dir: Path):
    table = rich.table.Table(title=f"Run summary ({output_dir})", box=box.SIMPLE)
    table.add_column("Outcome")
    table.add_column("Documents", justify="right")
    for action in RunAction:
        if actions[action]:
            table.add_row(action.value, str(actions[action]))
    console.print(table)


def run_once(
    config: RunConfig, documents, output_dir: Path, manifest_path, trace_path, namespace
) -> Tuple[Counter, List[str]]:
    gateway = build_gateway(config, embedder=False, cache_namespace=namespace)
    pipeline = CascadePipeline(
        gateway, config.pipeline_config(), config.prompt_library()
    )
    actions: Counter = Counter()
    failed: List[str] = list()
    tui = Doc2egTUI([document.id for document in documents])
    with tui:
        for result in run_corpus(
            documents,
            pipeline,
            output_dir,
            manifest_path=manifest_path,
            parallelism=int(config.get("parallelism.documents")),
            trace_path=trace_path,
            on_start=lambda document: tui.start_document(document.id),
        ):
            tui.finish_document(result)
            actions[result.action] += 1
            if result.action == RunAction.FAILED:
                failed.append(result.document_id)
            json_output_console.print_json(
                data={
                    "id": result.document_id,
                    "status": result.action.value,
                    "error": result.error,
                },
                indent=None,
            )
    log_console.log(f"provider usage: {dict(gateway.metrics)}")
    print_run_summary(actions, output_dir)
    return actions, failed


def command_generate(args):
    config = load_config(args, generate_overrides(args))
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    documents, filtered = select_documents(config)

    if args.dry_run:
        written = write_dry_run_prompts(config, filtered.kept)
        console.print(
            f"Wrote {written} prompts for {len(filtered.kept)} documents "
            f"to {config.get('paths.prompts')}"
        )
        return

    # fail on configuration problems before the first request
    build_gateway(config, embedder=False)

    base_dir = Path(config.get("paths.output"))
    manifest = config.get("paths.manifest")
    trace = config.get("paths.trace")
    failed: List[str] = list()
    for run in range(1, args.runs + 1):
        if args.runs == 1:
            output_dir, namespace = base_dir, ""
            manifest_path = Path(manifest) if manifest else None
            trace_path = Path(trace) if trace else None
        else:
            output_dir, namespace = base_dir / f"run-{run}", f"run-{run}"
            manifest_path = output_dir / "manifest.jsonl"
            trace_path = output_dir / (Path(trace).name if trace else "trace.jsonl")
        _actions, run_failed = run_once(
            config, documents, output_dir, manifest_path, trace_path, namespace
        )
        failed.extend(run_failed)

    if failed:
        raise RunFailed(
            f"{len(failed)} document run(s) failed; see the manifest for details",
            sorted(set(failed)),
        )


def paired_bundles(
    first_path: Path, second_path: Path, names=("gold", "predicted")
) -> List[Tuple[EventGraphBundle, EventGraphBundle]]:
    first, second = read_bundles(first_path), read_bundles(second_path)
    only_first = sorted(set(first) - set(second))
    only_second = sorted(set(second) - set(first))
    if only_first:
        error_console.log(
            f"[yellow]warning:[default] {len(only_first)} {names[0]} document(s) "
            f"have no {names[1]} bundle: {', '.join(only_first)}"
        )
    if only_second:
        error_console.log(
            f"[yellow]warning:[default] {len(only_second)} {names[1]} document(s) "
            f"have no {names[0]} bundle: {', '.join(only_second)}"
        )
    common = sorted(set(first) & set(second))
    if not common:
        raise ValueError("the two bundle sets have no document in common")
    return [(first[document_id], second[document_id]) for document_id in common]


def command_eval_hgs(args):
    config = load_config(
        args,
        {
            "evaluation.closure": args.closure,
            "embedding.kind": args.embedding,
            "pipeline.relations": args.relation,
            "parallelism.documents": args.parallelism,
        },
    )
    gateway = build_gateway(config, generator=False)
    pairs = paired_bundles(args.gold, args.pred)
    result = corpus_hgs(
        pairs,
        EmbeddingLookup(gateway.embed),
        closure=bool(config.get("evaluation.closure")),
        relations=config.relations,
        max_workers=int(config.get("parallelism.documents")),
    )
    report.print_hgs_report(result, show_documents=args.per_document)


def command_saliency(args):
    config = load_config(
        args,
        {
            "evaluation.mentions": args.mentions,
            "evaluation.splitter": args.splitter,
            "evaluation.lemmatizer": args.lemmatizer,
        },
    )
    use_llm = config.get("evaluation.mentions") == "llm"
    gateway = build_gateway(config, embedder=False) if use_llm else None
    prompts = config.prompt_library()
    splitter = get_splitter(config.get("evaluation.splitter"))
    lemmatizer = get_lemmatizer(config.get("evaluation.lemmatizer"))

    records = {record.id: record for record in read_corpus(args.corpus)}
    bundles = read_bundles(args.bundles)
    per_document = list()
    for document_id, bundle in bundles.items():
        if document_id not in records:
            error_console.log(
                f"[yellow]warning:[default] bundle {document_id} "
                "has no document in the corpus"
            )
            continue
        doc = build_sentence_doc(records[document_id], splitter, lemmatizer)
        scores = list()
        for event in bundle.events:
            if use_llm:
                mentions = detect_mentions_llm(doc, event, gateway, prompts)
            else:
                mentions = detect_mentions_exact(doc, event, lemmatizer)
            scores.append(saliency_scores(doc, mentions))
        per_document.append((document_id, scores))
    if not per_document:
        raise ValueError("no bundle matched a corpus document")
    report.print_saliency_report(
        corpus_saliency(per_document), show_documents=args.per_document
    )


def command_stats(args):
    config = load_config(args, {"evaluation.closure": args.closure})
    if not args.traces and args.bundles is None:
        raise ConfigError("give at least one trace file or --bundles")
    if args.traces:
        runs = [
            (str(trace_path), compute_format_stats(read_traces(trace_path)))
            for trace_path in args.traces
        ]
        report.print_format_stats(runs, average_format_stats([s for _, s in runs]))
    if args.bundles is not None:
        bundles = read_bundles(args.bundles)
        report.print_graph_statistics(
            graph_statistics(
                bundles.values(), closure=bool(config.get("evaluation.closure"))
            )
        )


def command_agreement(args):
    config = load_config(args, {"pipeline.relations": args.relation})
    pairs = paired_bundles(args.first, args.second, names=("first", "second"))
    report.print_agreement(
        corpus_agreement(pairs, relations=config.relations, closure=args.closure)
    )


def validate_file(file_path: Path) -> Optional[Dict[str, Any]]:
    try:
        with open(file_path, encoding="utf-8") as bundle_file:
            EventGraphBundle.from_json(bundle_file.read())
    except (GraphError, OSError, UnicodeDecodeError) as e:
        failure = {
            "file": str(file_path),
            "error": type(e).__name__,
            "message": str(e),
        }
        if isinstance(e, CycleError) and e.cycle:
            failure["cycle"] = [event.text for event in e.cycle]
        return failure
    return None


def command_validate(args):
    files: List[Path] = list()
    for path in args.bundles:
        files.extend(sorted(path.glob("*.json")) if path.is_dir() else [path])
    failures = [failure for failure in map(validate_file, files) if failure]

    table = rich.table.Table(box=box.SIMPLE)
    table.add_column("File")
    table.add_column("Result")
    failed_files = {failure["file"]: failure for failure in failures}
    for file_path in files:
        failure = failed_files.get(str(file_path))
        if failure is None:
            table.add_row(str(file_path), "[green]:heavy_check_mark-emoji: valid")
        else:
            table.add_row(str(file_path), f"[red]{failure['message']}")
    console.print(table)

    if failures:
        raise ValidationFailed(
            f"{len(failures)} of {len(files)} bundle file(s) are invalid", failures
        )
    json_output_console.print_json(data={"valid": len(files)}, indent=None)


COMMANDS = {
    "generate": command_generate,
    "eval-hgs": command_eval_hgs,
    "saliency": command_saliency,
    "stats": command_stats,
    "agreement": command_agreement,
    "validate": command_validate,
}


def error_payload(error: Exception) -> Dict[str, Any]:
    if hasattr(error, "to_dict"):
        payload = error.to_dict()
    else:
        payload = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, ValidationFailed):
        payload["failures"] = error.failures
    if isinstance(error, RunFailed):
        payload["documents"] = error.document_ids
    return payload


def main(argv: Optional[Sequence[str]] = None):
    args = get_parser().parse_args(argv)

    if args.output == "json":
        console.quiet = True
        json_output_console.quiet = False
    if args.verbose:
        log_console.quiet = False

    try:
        COMMANDS[args.command](args)
    except KeyboardInterrupt:
        error_console.log(":x: Interrupted")
        sys.exit(130)
    except Exception as e:
        if args.debug:
            console.print_exception(show_locals=True)
        error_console.print_json(data=error_payload(e), indent=None)
        sys.exit(2 if isinstance(e, ValidationFailed) else 1)


if __name__ == "__main__":
    main()
