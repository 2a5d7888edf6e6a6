"""
The cascade: summary, salient events, then one relation graph at a time
(hierarchical, temporal, causal), each refined over several
generate-and-grade rounds.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple

from doc2eg.api import ProviderError
from doc2eg.console_output import log_console
from doc2eg.document import MAX_WORDS, MIN_WORDS, DocumentRecord
from doc2eg.gateway import Gateway, Stage
from doc2eg.graph import (
    RELATION_ORDER,
    Event,
    EventGraphBundle,
    RejectionReason,
    RelationEdge,
    RelationGraph,
    RelationType,
    empty_graph,
    event_key,
    merge_edges,
)
from doc2eg.prompts import PROMPT_FORMATS, PromptLibrary, RenderError
from doc2eg.responses import (
    EventListFormatError,
    GraderParseError,
    ParseStatus,
    parse_event_list,
    parse_grader,
    parse_graph_response,
)

MAX_ROUNDS = 5


class DocumentError(RuntimeError):
    def __init__(
        self,
        message,
        document_id: Optional[str] = None,
        stage: Optional[Stage] = None,
        relation: Optional[RelationType] = None,
        round_number: Optional[int] = None,
    ):
        super().__init__(message)
        self.document_id = document_id
        self.stage = stage
        self.relation = relation
        self.round_number = round_number
        self.trace = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "document_id": self.document_id,
            "stage": self.stage.value if self.stage else None,
            "relation": self.relation.value if self.relation else None,
            "round": self.round_number,
        }


class DocumentSkipped(DocumentError):
    """The document produced no usable summary or event list."""


class DocumentRejected(DocumentError):
    """The document failed the length filter."""


class PipelineConfig(object):
    def __init__(
        self,
        max_rounds: int = MAX_ROUNDS,
        early_stop: bool = True,
        use_grader: bool = True,
        dependent_relations: bool = True,
        prompt_format: str = "python",
        relations: Sequence[RelationType] = RELATION_ORDER,
        min_words: int = MIN_WORDS,
        max_words: int = MAX_WORDS,
    ):
        if max_rounds < 1:
            raise ValueError(f"max_rounds must be at least 1, got {max_rounds}")
        if prompt_format not in PROMPT_FORMATS:
            raise ValueError(f"unknown prompt format {prompt_format!r}")
        if not relations:
            raise ValueError("at least one relation type must be generated")
        if min_words >= max_words:
            raise ValueError("min_words must be below max_words")
        self.max_rounds = max_rounds
        self.early_stop = early_stop
        self.use_grader = use_grader
        self.dependent_relations = dependent_relations
        self.prompt_format = prompt_format
        # generation order is fixed whatever order the subset was given in
        self.relations = tuple(r for r in RELATION_ORDER if r in set(relations))
        self.min_words = min_words
        self.max_words = max_words

    def to_dict(self):
        return {
            "max_rounds": self.max_rounds,
            "early_stop": self.early_stop,
            "use_grader": self.use_grader,
            "dependent_relations": self.dependent_relations,
            "prompt_format": self.prompt_format,
            "relations": [relation.short_name for relation in self.relations],
            "min_words": self.min_words,
            "max_words": self.max_words,
        }


EdgePair = Tuple[str, str]


def _pairs(edges) -> List[EdgePair]:
    return [(edge.head.text, edge.tail.text) for edge in edges]


class GraderRecord(object):
    __slots__ = ("head", "tail", "verdict", "cached", "parse_error")

    def __init__(self, head, tail, verdict, cached=False, parse_error=False):
        self.head = head
        self.tail = tail
        self.verdict = verdict
        self.cached = cached
        self.parse_error = parse_error

    def to_dict(self):
        return {
            "head": self.head,
            "tail": self.tail,
            "verdict": self.verdict,
            "cached": self.cached,
            "parse_error": self.parse_error,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["head"],
            data["tail"],
            data["verdict"],
            data.get("cached", False),
            data.get("parse_error", False),
        )


class RoundTrace(object):
    def __init__(
        self,
        round_number: int,
        parse_status: ParseStatus,
        had_code_block: bool = False,
        generated: Sequence[EdgePair] = (),
        verdicts: Sequence[GraderRecord] = (),
        retained: Sequence[EdgePair] = (),
        rejected_cycle: Sequence[EdgePair] = (),
        dropped_endpoint: Sequence[EdgePair] = (),
    ):
        self.round_number = round_number
        self.parse_status = parse_status
        self.had_code_block = had_code_block
        self.generated = [tuple(pair) for pair in generated]
        self.verdicts = list(verdicts)
        self.retained = [tuple(pair) for pair in retained]
        self.rejected_cycle = [tuple(pair) for pair in rejected_cycle]
        self.dropped_endpoint = [tuple(pair) for pair in dropped_endpoint]
        generated_keys = {_pair_key(pair) for pair in self.generated}
        if any(_pair_key(pair) not in generated_keys for pair in self.retained):
            raise ValueError("retained edges must come from the generated edges")

    def to_dict(self):
        return {
            "round": self.round_number,
            "parse_status": self.parse_status.value,
            "had_code_block": self.had_code_block,
            "generated": [list(pair) for pair in self.generated],
            "verdicts": [record.to_dict() for record in self.verdicts],
            "retained": [list(pair) for pair in self.retained],
            "rejected_cycle": [list(pair) for pair in self.rejected_cycle],
            "dropped_endpoint": [list(pair) for pair in self.dropped_endpoint],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            round_number=data["round"],
            parse_status=ParseStatus(data["parse_status"]),
            had_code_block=data.get("had_code_block", False),
            generated=data.get("generated", []),
            verdicts=[
                GraderRecord.from_dict(item) for item in data.get("verdicts", [])
            ],
            retained=data.get("retained", []),
            rejected_cycle=data.get("rejected_cycle", []),
            dropped_endpoint=data.get("dropped_endpoint", []),
        )


def _pair_key(pair: EdgePair) -> Tuple[str, str]:
    return event_key(pair[0]), event_key(pair[1])


class RelationTrace(object):
    def __init__(
        self, relation: RelationType, rounds: Optional[List[RoundTrace]] = None
    ):
        self.relation = relation
        self.rounds: List[RoundTrace] = rounds or []

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)

    @property
    def retained(self) -> List[EdgePair]:
        return [pair for round_trace in self.rounds for pair in round_trace.retained]

    def to_dict(self):
        return {
            "relation": self.relation.value,
            "rounds": [round_trace.to_dict() for round_trace in self.rounds],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            RelationType.from_name(data["relation"]),
            [RoundTrace.from_dict(item) for item in data.get("rounds", [])],
        )


class PipelineTrace(object):
    def __init__(
        self,
        document_id: str,
        summary: Optional[str] = None,
        events: Optional[List[str]] = None,
        relations: Optional[Dict[RelationType, RelationTrace]] = None,
        error: Optional[Dict[str, Any]] = None,
    ):
        self.document_id = document_id
        self.summary = summary
        self.events = events or []
        self.relations: Dict[RelationType, RelationTrace] = relations or {}
        self.error = error

    def rounds_used(self) -> Dict[str, int]:
        return {
            relation.short_name: trace.rounds_used
            for relation, trace in self.relations.items()
        }

    def to_dict(self):
        return {
            "document_id": self.document_id,
            "summary": self.summary,
            "events": self.events,
            "relations": [trace.to_dict() for trace in self.relations.values()],
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data):
        relation_traces = [
            RelationTrace.from_dict(item) for item in data.get("relations", [])
        ]
        return cls(
            document_id=data["document_id"],
            summary=data.get("summary"),
            events=data.get("events", []),
            relations={trace.relation: trace for trace in relation_traces},
            error=data.get("error"),
        )


class CascadePipeline(object):
    def __init__(
        self,
        gateway: Gateway,
        config: Optional[PipelineConfig] = None,
        prompts: Optional[PromptLibrary] = None,
    ):
        self.gateway = gateway
        self.config = config or PipelineConfig()
        self.prompts = prompts or PromptLibrary(prompt_format=self.config.prompt_format)

    def _ask(
        self, prompt: str, stage: Stage, document_id, relation=None, round_number=None
    ):
        try:
            return self.gateway.ask(prompt, stage)
        except ProviderError as e:
            where = f"{stage.value} stage"
            if relation is not None:
                where += f", {relation.value} round {round_number}"
            raise DocumentError(
                f"{document_id}: {where}: {type(e).__name__}: {e}",
                document_id=document_id,
                stage=stage,
                relation=relation,
                round_number=round_number,
            ) from e

    def generate_salient_events(
        self, document: DocumentRecord, trace: Optional[PipelineTrace] = None
    ) -> List[Event]:
        summary = self._ask(
            self.prompts.render_summary_prompt(document), Stage.SUMMARY, document.id
        )
        if trace is not None:
            trace.summary = summary
        try:
            event_prompt = self.prompts.render_event_prompt(summary)
        except RenderError as e:
            raise DocumentSkipped(
                f"{document.id}: the summary is empty",
                document_id=document.id,
                stage=Stage.SUMMARY,
            ) from e

        response = self._ask(event_prompt, Stage.EVENTS, document.id)
        try:
            events = parse_event_list(response)
        except EventListFormatError as e:
            raise DocumentSkipped(
                f"{document.id}: {e}", document_id=document.id, stage=Stage.EVENTS
            ) from e
        if trace is not None:
            trace.events = [event.text for event in events]
        return events

    def _grade(
        self,
        document: DocumentRecord,
        edge: RelationEdge,
        round_number: int,
        verdicts: Dict[RelationEdge, bool],
    ) -> GraderRecord:
        head, tail = edge.head.text, edge.tail.text
        if edge in verdicts:
            verdict = "yes" if verdicts[edge] else "no"
            log_console.log(
                f"{document.id}: reusing the {verdict} verdict for {edge!r}"
            )
            return GraderRecord(head, tail, verdict, cached=True)

        response = self._ask(
            self.prompts.render_grader_prompt(document, edge),
            Stage.GRADER,
            document.id,
            edge.relation,
            round_number,
        )
        try:
            accepted = parse_grader(response).accepted
            parse_error = False
        except GraderParseError as e:
            log_console.log(f"{document.id}: {e}; counting it as a no for {edge!r}")
            accepted, parse_error = False, True
        verdicts[edge] = accepted
        return GraderRecord(
            head, tail, "yes" if accepted else "no", parse_error=parse_error
        )

    def generate_relation_graph(
        self,
        document: DocumentRecord,
        events: Sequence[Event],
        relation: RelationType,
        priors: Sequence[RelationGraph] = (),
    ) -> Tuple[RelationGraph, RelationTrace]:
        """
        Grow one relation graph over up to max_rounds rounds.

        Each round re-renders the prompt with the edges kept so far, grades
        the edges the model adds and merges the accepted ones; edges that
        would close a cycle are rejected. With early stop on, the first
        round that keeps nothing new ends the loop.
        """
        if not events:
            raise ValueError("cannot generate a relation graph without events")
        expected = RELATION_ORDER[: RELATION_ORDER.index(relation)]
        for prior in priors:
            if prior.relation not in expected:
                raise ValueError(
                    f"a {prior.relation.value} graph cannot precede {relation.value}"
                )

        graph = empty_graph(relation, events)
        relation_trace = RelationTrace(relation)
        verdicts: Dict[RelationEdge, bool] = dict()
        rendered_priors = list(priors) if self.config.dependent_relations else []

        for round_number in range(1, self.config.max_rounds + 1):
            prompt = self.prompts.render_graph_prompt(
                document, events, relation, rendered_priors, graph.edges
            )
            response = self._ask(
                prompt, Stage.GRAPH, document.id, relation, round_number
            )
            parsed = parse_graph_response(
                response, events, relation, self.prompts.prompt_format
            )
            for head_text, tail_text in parsed.dropped:
                log_console.log(
                    f"{document.id}: {relation.value} round {round_number}: dropped "
                    f"({head_text!r}, {tail_text!r}), endpoint not in the event list"
                )
            if parsed.format_error:
                log_console.log(
                    f"{document.id}: {relation.value} round {round_number}: "
                    "format error in the response"
                )

            generated = [
                RelationEdge(head, tail, relation) for head, tail in parsed.edges
            ]
            records: List[GraderRecord] = list()
            accepted: List[RelationEdge] = list()
            for edge in generated:
                if edge in graph:
                    continue
                if self.config.use_grader:
                    record = self._grade(document, edge, round_number, verdicts)
                    records.append(record)
                    if record.verdict != "yes":
                        continue
                accepted.append(edge)

            merge = merge_edges(graph, accepted)
            for edge in merge.rejected_for(RejectionReason.CYCLE):
                log_console.log(
                    f"{document.id}: {relation.value} round {round_number}: "
                    f"rejected {edge!r}, it would close a cycle"
                )
            graph = merge.graph
            relation_trace.rounds.append(
                RoundTrace(
                    round_number=round_number,
                    parse_status=parsed.parse_status,
                    had_code_block=parsed.had_code_block,
                    generated=_pairs(generated),
                    verdicts=records,
                    retained=_pairs(merge.added),
                    rejected_cycle=_pairs(merge.rejected_for(RejectionReason.CYCLE)),
                    dropped_endpoint=parsed.dropped,
                )
            )
            if self.config.early_stop and not merge.added:
                break

        return graph, relation_trace

    def run_document(
        self, document: DocumentRecord
    ) -> Tuple[EventGraphBundle, PipelineTrace]:
        count = document.word_count
        if not self.config.min_words <= count <= self.config.max_words:
            raise DocumentRejected(
                f"{document.id}: {count} words is outside "
                f"[{self.config.min_words}, {self.config.max_words}]",
                document_id=document.id,
            )

        trace = PipelineTrace(document.id)
        try:
            events = self.generate_salient_events(document, trace)
            graphs: Dict[RelationType, RelationGraph] = dict()
            for relation in self.config.relations:
                priors = [graphs[r] for r in RELATION_ORDER if r in graphs]
                (
                    graphs[relation],
                    trace.relations[relation],
                ) = self.generate_relation_graph(
                    document, events, relation, priors
                )
        except DocumentError as e:
            trace.error = e.to_dict()
            e.trace = trace
            raise
        return EventGraphBundle.from_graphs(document.id, events, graphs), trace
