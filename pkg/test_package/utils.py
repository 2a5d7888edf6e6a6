import json
from collections import defaultdict
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from doc2eg.api import FixtureMissingError
from doc2eg.gateway import Gateway, GenerationRequest, ScriptedGenerator, Stage
from doc2eg.graph import (
    Event,
    EventGraphBundle,
    RelationEdge,
    RelationGraph,
    RelationType,
)
from doc2eg.prompts import GRAPH_NAMES

TEMPORAL = RelationType.TEMPORAL
HIERARCHICAL = RelationType.HIERARCHICAL
CAUSAL = RelationType.CAUSAL


def events(*texts: str) -> List[Event]:
    return [Event(text) for text in texts]


def edge(head: str, tail: str, relation: RelationType = TEMPORAL) -> RelationEdge:
    return RelationEdge(Event(head), Event(tail), relation)


def graph(
    nodes: Sequence[str],
    pairs: Iterable[Tuple[str, str]] = (),
    relation: RelationType = TEMPORAL,
) -> RelationGraph:
    return RelationGraph(
        relation, events(*nodes), [edge(head, tail, relation) for head, tail in pairs]
    )


def bundle(
    document_id: str,
    nodes: Sequence[str],
    pairs: Dict[RelationType, Iterable[Tuple[str, str]]] = None,
) -> EventGraphBundle:
    pairs = pairs or {}
    return EventGraphBundle.from_graphs(
        document_id,
        events(*nodes),
        {
            relation: graph(nodes, relation_pairs, relation)
            for relation, relation_pairs in pairs.items()
        },
    )


def body_of(word_count: int, sentence_words: int = 10) -> str:
    """A document body with exactly word_count whitespace-separated words."""
    words = [f"word{index}" for index in range(word_count)]
    sentences = [
        " ".join(words[start : start + sentence_words]) + "."
        for start in range(0, word_count, sentence_words)
    ]
    return " ".join(sentences)


def write_jsonl(path, items):
    with open(path, "w", encoding="utf-8") as out:
        for item in items:
            out.write(json.dumps(item) + "\n")


def read_jsonl(path) -> List[dict]:
    with open(path, encoding="utf-8") as jsonl_file:
        return [json.loads(line) for line in jsonl_file if line.strip()]


STORM_EVENTS = (
    "1. (The storm; hit; the town)\n2. (Power; failed)\n3. (Schools; closed)\n"
)
STORM = "The storm hit the town"
POWER = "Power failed"
SCHOOLS = "Schools closed"


def add_edges(relation: RelationType, pairs: Iterable[Tuple[str, str]]) -> str:
    name = GRAPH_NAMES[relation]
    return "\n".join(
        f'{name}.add_edge("{head}", "{tail}")  # stated in the text'
        for head, tail in pairs
    )


def graph_relation(prompt: str) -> Optional[RelationType]:
    """The relation a code or JSON graph prompt asks for."""
    for relation, name in GRAPH_NAMES.items():
        if f"{name} = nx.DiGraph()  # This is a directed acyclic graph" in prompt:
            return relation
        if f"list the {relation.short_name} relations between" in prompt:
            return relation
    return None


def graded_statement(prompt: str) -> str:
    return prompt.split("Here is the answer:", 1)[1].strip()


class ScriptedModel(object):
    """
    Answers every stage of the cascade. Graph responses are consumed in
    order per relation, repeating the last one; the grader says yes unless
    ``grader`` decides otherwise for an edge statement.
    """

    def __init__(
        self,
        summary: str = "A storm hit the town and the power failed.",
        events: str = STORM_EVENTS,
        graphs: Optional[Dict[RelationType, Sequence[str]]] = None,
        grader: Optional[Callable[[str], str]] = None,
    ):
        self.summary = summary
        self.events = events
        self.graphs = {
            relation: list(answers) for relation, answers in (graphs or {}).items()
        }
        self.grader = grader or (lambda statement: "Score: Yes")
        self.graph_calls: Dict[RelationType, int] = defaultdict(int)
        self.requests: List[GenerationRequest] = list()

    def __call__(self, request: GenerationRequest) -> str:
        self.requests.append(request)
        if request.stage == Stage.SUMMARY:
            return self.summary
        if request.stage == Stage.EVENTS:
            return self.events
        if request.stage == Stage.GRADER:
            return self.grader(graded_statement(request.prompt))
        if request.stage == Stage.GRAPH:
            relation = graph_relation(request.prompt)
            answers = self.graphs.get(relation)
            if not answers:
                raise FixtureMissingError(f"no {relation.value} graph response")
            index = min(self.graph_calls[relation], len(answers) - 1)
            self.graph_calls[relation] += 1
            return answers[index]
        raise FixtureMissingError(f"no response for the {request.stage.value} stage")

    def prompts(self, stage: Stage) -> List[str]:
        return [request.prompt for request in self.requests if request.stage == stage]

    def gateway(self, **kwargs) -> Gateway:
        return Gateway(ScriptedGenerator(fallback=self), **kwargs)
