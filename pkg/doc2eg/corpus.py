import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, NamedTuple, Optional
from urllib.parse import quote

from doc2eg.console_output import log_console
from doc2eg.document import DocumentRecord
from doc2eg.graph import EventGraphBundle
from doc2eg.pipeline import (
    CascadePipeline,
    DocumentError,
    DocumentRejected,
    DocumentSkipped,
    PipelineTrace,
)


class RunAction(Enum):
    GENERATED = "generated"
    RESUMED = "resumed"
    SKIPPED = "skipped"
    EXCLUDED = "excluded"
    FAILED = "failed"


# manifest statuses that need no further work on a rerun
DONE_STATUSES = {
    RunAction.GENERATED.value,
    RunAction.SKIPPED.value,
    RunAction.EXCLUDED.value,
}


class CorpusResult(NamedTuple):
    document_id: str
    action: RunAction
    bundle: Optional[EventGraphBundle] = None
    trace: Optional[PipelineTrace] = None
    error: Optional[Dict[str, Any]] = None


def bundle_file_name(document_id: str) -> str:
    return quote(document_id, safe="") + ".json"


def get_text_sha1(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def get_file_sha1(file_path: Path) -> str:
    hash_sha1 = hashlib.sha1()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hash_sha1.update(chunk)
    return hash_sha1.hexdigest()


def write_if_changed(file_path: Path, text: str) -> bool:
    """Write text unless the file already holds exactly that content."""
    if file_path.is_file() and get_file_sha1(file_path) == get_text_sha1(text):
        return False
    file_path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = file_path.with_name(file_path.name + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as out:
        out.write(text)
    tmp_path.replace(file_path)
    return True


class Manifest(object):
    """
    Append-only JSON-lines record of per-document outcomes. When an id
    appears several times the last entry wins.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: Dict[str, Dict[str, Any]] = dict()
        if self.path.is_file():
            with open(self.path, encoding="utf-8") as manifest_file:
                for line_number, line in enumerate(manifest_file, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self._entries[str(entry["id"])] = entry
                    except (ValueError, KeyError, TypeError):
                        log_console.log(
                            f"{self.path}:{line_number}: "
                            "ignoring unreadable manifest line"
                        )

    def status(self, document_id: str) -> Optional[str]:
        entry = self._entries.get(document_id)
        return entry["status"] if entry else None

    def entries(self) -> Dict[str, Dict[str, Any]]:
        return dict(self._entries)

    def record(
        self,
        document_id: str,
        status: RunAction,
        rounds_used: Optional[Dict[str, int]] = None,
        error: Optional[Dict[str, Any]] = None,
    ):
        entry: Dict[str, Any] = {
            "id": document_id,
            "status": status.value,
            "rounds_used": rounds_used or {},
        }
        if error is not None:
            entry["error"] = error
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as manifest_file:
                manifest_file.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self._entries[document_id] = entry


def _process(pipeline: CascadePipeline, document: DocumentRecord) -> CorpusResult:
    try:
        bundle, trace = pipeline.run_document(document)
    except DocumentRejected as e:
        return CorpusResult(document.id, RunAction.EXCLUDED, error=e.to_dict())
    except DocumentSkipped as e:
        return CorpusResult(
            document.id, RunAction.SKIPPED, trace=e.trace, error=e.to_dict()
        )
    except DocumentError as e:
        return CorpusResult(
            document.id, RunAction.FAILED, trace=e.trace, error=e.to_dict()
        )
    except Exception as e:
        return CorpusResult(
            document.id,
            RunAction.FAILED,
            error={
                "error": type(e).__name__,
                "message": str(e),
                "document_id": document.id,
            },
        )
    return CorpusResult(document.id, RunAction.GENERATED, bundle=bundle, trace=trace)


def run_corpus(
    documents: Iterable[DocumentRecord],
    pipeline: CascadePipeline,
    output_dir: Path,
    manifest_path: Optional[Path] = None,
    parallelism: int = 1,
    trace_path: Optional[Path] = None,
    on_start: Optional[Callable[[DocumentRecord], None]] = None,
) -> Iterator[CorpusResult]:
    """
    Run the pipeline over a corpus and yield one result per document, in
    input order.

    Documents are processed concurrently by up to ``parallelism`` workers.
    Bundles, manifest entries and traces are written as results are
    yielded, so the files do not depend on scheduling. Documents the
    manifest already marks as done are not run again.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    output_dir = Path(output_dir)
    manifest = Manifest(manifest_path or output_dir / "manifest.jsonl")

    documents = list(documents)
    pending = list()
    for document in documents:
        done = manifest.status(document.id) in DONE_STATUSES
        if done and manifest.status(document.id) == RunAction.GENERATED.value:
            done = (output_dir / bundle_file_name(document.id)).is_file()
        pending.append((document, done))

    def work(document: DocumentRecord) -> CorpusResult:
        if on_start is not None:
            on_start(document)
        return _process(pipeline, document)

    with ThreadPoolExecutor(max_workers=parallelism) as executor:
        futures = [
            None if done else executor.submit(work, document)
            for document, done in pending
        ]
        for (document, done), future in zip(pending, futures):
            if done:
                yield CorpusResult(document.id, RunAction.RESUMED)
                continue
            result = future.result()
            if result.bundle is not None:
                write_if_changed(
                    output_dir / bundle_file_name(document.id), result.bundle.to_json()
                )
            rounds_used = result.trace.rounds_used() if result.trace else {}
            manifest.record(document.id, result.action, rounds_used, result.error)
            if trace_path is not None and result.trace is not None:
                trace_path = Path(trace_path)
                trace_path.parent.mkdir(parents=True, exist_ok=True)
                with open(trace_path, "a", encoding="utf-8") as trace_file:
                    trace_file.write(
                        json.dumps(result.trace.to_dict(), ensure_ascii=False) + "\n"
                    )
            if result.error is not None:
                log_console.log(
                    f"{document.id}: {result.action.value}: {result.error['message']}"
                )
            yield result


def read_traces(trace_path: Path) -> Iterator[PipelineTrace]:
    with open(trace_path, encoding="utf-8") as trace_file:
        for line in trace_file:
            if line.strip():
                yield PipelineTrace.from_dict(json.loads(line))


def read_bundles(path: Path) -> Dict[str, EventGraphBundle]:
    """
    Load bundles keyed by document id from a directory of bundle JSON files
    or from a single bundle file.
    """
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    bundles: Dict[str, EventGraphBundle] = dict()
    for file_path in files:
        with open(file_path, encoding="utf-8") as bundle_file:
            bundle = EventGraphBundle.from_json(bundle_file.read())
        if bundle.document_id in bundles:
            raise ValueError(
                f"{file_path}: duplicate document id {bundle.document_id!r}"
            )
        bundles[bundle.document_id] = bundle
    return bundles
