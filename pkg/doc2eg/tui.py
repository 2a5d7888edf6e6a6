from typing import Dict, Sequence

import rich.live
import rich.progress
import rich.table
import rich.text
import rich.tree

from doc2eg.console_output import console
from doc2eg.corpus import CorpusResult, RunAction

# above this many documents only the overall bar is drawn
MAX_DOCUMENT_ROWS = 50


class Doc2egTUI(object):
    def __init__(self, document_ids: Sequence[str]):
        self.document_progress: Dict[str, rich.progress.Progress] = dict()
        tree = rich.tree.Tree("Documents", hide_root=True)
        progress_table = rich.table.Table.grid()
        progress_table.row_styles = ["dim", ""]

        if len(document_ids) <= MAX_DOCUMENT_ROWS:
            for document_id in document_ids:
                tree.add(f":page_facing_up: {document_id}", style="bright")
                document_progress = rich.progress.Progress(
                    rich.progress.BarColumn(),
                    rich.progress.SpinnerColumn(finished_text=""),
                    rich.progress.TextColumn(""),
                    console=console,
                )
                document_progress.add_task(description="", total=1, start=False)
                progress_table.add_row(document_progress)
                self.document_progress[document_id] = document_progress

        self.overall_progress = rich.progress.Progress(
            *rich.progress.Progress.get_default_columns(),
            rich.progress.MofNCompleteColumn(),
            console=console,
        )
        self.overall_progress.add_task(
            "Total progress", start=True, total=len(document_ids)
        )
        table = rich.table.Table().grid(padding=1, pad_edge=True)
        if self.document_progress:
            tree_and_progress = rich.table.Table.grid(
                "", rich.table.Column(""), expand=True
            )
            tree_and_progress.add_row(tree, progress_table)
            table.add_row(tree_and_progress)
        table.add_row(self.overall_progress)
        self.live = rich.live.Live(table, console=console, refresh_per_second=10)

    def __enter__(self):
        self.live.__enter__()
        return self

    def __exit__(self, *args, **kwargs):
        self.live.__exit__(*args, **kwargs)

    def start_document(self, document_id: str):
        progress = self.document_progress.get(document_id)
        if progress is not None:
            progress.start_task(task_id=progress.task_ids[0])
            progress.columns[2].text_format = "generating"

    def finish_document(self, result: CorpusResult):
        progress = self.document_progress.get(result.document_id)
        if progress is not None:
            task_id = progress.task_ids[0]
            if not progress.tasks[0].started:
                progress.start_task(task_id=task_id)
            progress.update(task_id=task_id, completed=progress.tasks[0].total)
            progress.columns[1].finished_text = Doc2egTUI.format_result(result)
            progress.columns[2].text_format = ""
        self.overall_progress.update(
            task_id=self.overall_progress.task_ids[0], advance=1
        )

    @staticmethod
    def format_result(result: CorpusResult) -> rich.text.Text:
        if result.action == RunAction.GENERATED:
            edges = len(result.bundle.edges()) if result.bundle else 0
            return rich.text.Text.from_markup(
                f"[green]:heavy_check_mark-emoji: Generated ({edges} edges)"
            )
        elif result.action == RunAction.RESUMED:
            return rich.text.Text.from_markup("[green]Already done")
        elif result.action == RunAction.EXCLUDED:
            return rich.text.Text.from_markup("[yellow]Excluded")
        elif result.action == RunAction.SKIPPED:
            return rich.text.Text.from_markup("[yellow]Skipped")
        return rich.text.Text.from_markup("[red]:x-emoji: Failed")
