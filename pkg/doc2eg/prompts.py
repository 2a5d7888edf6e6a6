"""
Prompt templates for every stage of graph generation and mention detection.

Templates are plain-text files with ``{slot}`` placeholders. The shipped
versions live next to this module; a templates directory given on the
command line overrides them file by file.
"""
import json
import string
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from doc2eg.gateway import Stage
from doc2eg.graph import Event, RelationEdge, RelationGraph, RelationType

DEFAULT_TEMPLATES_DIR = Path(__file__).parent / "templates"

PROMPT_FORMATS = ("python", "json")


class RenderError(ValueError):
    pass


class SlotTemplate(string.Template):
    # only {identifier} is a slot; any other brace is literal text
    pattern = r"""
    \{(?:
      (?P<named>[a-z_][a-z0-9_]*)\}
      | (?P<escaped>(?!))
      | (?P<braced>(?!))
      | (?P<invalid>(?!))
    )
    """


class PromptTemplate(object):
    def __init__(self, name: str, stage: Stage, text: str):
        self.name = name
        self.stage = stage
        self.text = text
        self._template = SlotTemplate(text)

    @property
    def slots(self) -> List[str]:
        found = list()
        for match in self._template.pattern.finditer(self.text):
            name = match.group("named")
            if name and name not in found:
                found.append(name)
        return found

    def render(self, **values) -> str:
        try:
            rendered = self._template.substitute(values)
        except KeyError as e:
            raise RenderError(
                f"template {self.name!r} needs a value for slot {e.args[0]!r}"
            ) from e
        return rendered.rstrip() + "\n"

    def __repr__(self):
        return f"PromptTemplate({self.name!r}, slots={self.slots})"


TEMPLATE_STAGES = {
    "summary": Stage.SUMMARY,
    "events": Stage.EVENTS,
    "graph_python": Stage.GRAPH,
    "graph_json": Stage.GRAPH,
    "grader": Stage.GRADER,
    "mention": Stage.MENTION,
    "mention_followup": Stage.MENTION,
}

GRAPH_NAMES = {
    RelationType.HIERARCHICAL: "hierarchical_graph",
    RelationType.TEMPORAL: "temporal_graph",
    RelationType.CAUSAL: "causal_graph",
}

RELATION_DESCRIPTIONS = {
    RelationType.HIERARCHICAL: (
        "# This is a graph representing the hierarchical relation between the "
        "events in the document\n"
        "# Each edge in the graph represents a subevent relation between the head "
        "and tail nodes which are events\n"
        "# An edge means the head event is a subevent of the tail event. They are "
        "closely related but on different granularity levels."
    ),
    RelationType.TEMPORAL: (
        "# This is a graph representing the temporal relation between the events "
        "in the document\n"
        "# Each edge in the graph represents a happened-before relation between "
        "the head and tail nodes which are events\n"
        "# An edge means the head event happened before the tail event."
    ),
    RelationType.CAUSAL: (
        "# This is a graph representing the causal relation between the events in "
        "the document\n"
        "# Each edge in the graph represents a causal relation between the head "
        "and tail nodes which are events\n"
        "# An edge means the head event is caused by the tail event. The head "
        "event would not have happened without the tail event."
    ),
}

EDGE_STATEMENTS = {
    RelationType.HIERARCHICAL: 'Event "{head}" is a subevent of event "{tail}".',
    RelationType.TEMPORAL: 'Event "{head}" happened before event "{tail}".',
    RelationType.CAUSAL: 'Event "{head}" is caused by event "{tail}".',
}


def triple_quote_safe(text: str) -> str:
    """Escape text so it can sit between triple double quotes."""
    escaped = text.replace('"""', '\\"\\"\\"')
    if escaped.endswith('"') and not escaped.endswith('\\"'):
        escaped = escaped[:-1] + '\\"'
    return escaped


def python_string_literal(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def edge_statement(edge: RelationEdge) -> str:
    return EDGE_STATEMENTS[edge.relation].format(
        head=edge.head.text, tail=edge.tail.text
    )


def add_edge_call(graph_name: str, edge: RelationEdge) -> str:
    return "{}.add_edge({}, {})".format(
        graph_name,
        python_string_literal(edge.head.text),
        python_string_literal(edge.tail.text),
    )


def _require_body(document) -> str:
    body = getattr(document, "body", document)
    if not isinstance(body, str) or not body.strip():
        raise RenderError("cannot render a prompt for an empty document")
    return body


class PromptLibrary(object):
    def __init__(
        self,
        templates_dir: Optional[Path] = None,
        prompt_format: str = "python",
    ):
        if prompt_format not in PROMPT_FORMATS:
            raise ValueError(
                f"prompt format must be one of {', '.join(PROMPT_FORMATS)}, "
                f"got {prompt_format!r}"
            )
        self.templates_dir = Path(templates_dir) if templates_dir else None
        self.prompt_format = prompt_format
        self._templates: Dict[str, PromptTemplate] = dict()

    def template(self, name: str) -> PromptTemplate:
        if name not in self._templates:
            if name not in TEMPLATE_STAGES:
                raise KeyError(f"no prompt template called {name!r}")
            path = DEFAULT_TEMPLATES_DIR / f"{name}.txt"
            if self.templates_dir is not None:
                override = self.templates_dir / f"{name}.txt"
                if override.is_file():
                    path = override
            with open(path, encoding="utf-8") as template_file:
                text = template_file.read()
            self._templates[name] = PromptTemplate(name, TEMPLATE_STAGES[name], text)
        return self._templates[name]

    def render_summary_prompt(self, document) -> str:
        body = _require_body(document)
        return self.template("summary").render(document=triple_quote_safe(body))

    def render_event_prompt(self, summary: str) -> str:
        if not summary or not summary.strip():
            raise RenderError("cannot render the event prompt for an empty summary")
        return self.template("events").render(summary=triple_quote_safe(summary))

    def render_graph_prompt(
        self,
        document,
        event_list: Sequence[Event],
        relation: RelationType,
        prior: Sequence[RelationGraph] = (),
        existing_edges: Sequence[RelationEdge] = (),
    ) -> str:
        body = _require_body(document)
        if not event_list:
            raise RenderError("the graph prompt needs at least one event")
        for edge in existing_edges:
            if edge.relation != relation:
                raise RenderError(
                    f"existing edge {edge!r} is not a {relation.value} edge"
                )
        texts = [event.text for event in event_list]

        if self.prompt_format == "json":
            return self.template("graph_json").render(
                document=triple_quote_safe(body),
                event_list=json.dumps(texts, ensure_ascii=False),
                relation_label=relation.short_name,
                relation_description=_json_description(relation),
                prior_graphs=_json_prior_graphs(prior),
                existing_edges=_json_existing_edges(existing_edges),
            )

        graph_name = GRAPH_NAMES[relation]
        return self.template("graph_python").render(
            document='"""' + triple_quote_safe(body) + '"""',
            event_list=json.dumps(texts, ensure_ascii=False),
            prior_graphs=_python_prior_graphs(prior),
            relation_description=RELATION_DESCRIPTIONS[relation],
            graph_name=graph_name,
            relation_label=relation.short_name,
            existing_edges="\n".join(
                add_edge_call(graph_name, edge) for edge in existing_edges
            ),
        )

    def render_grader_prompt(self, document, edge: RelationEdge) -> str:
        body = _require_body(document)
        return self.template("grader").render(
            document=body, edge_statement=edge_statement(edge)
        )

    def render_mention_prompts(self, document, event: Event) -> Tuple[str, str]:
        body = _require_body(document)
        initial = self.template("mention").render(
            event=event.text, document=triple_quote_safe(body)
        )
        followup = self.template("mention_followup").render(event=event.text)
        return initial, followup

    def dry_run_prompts(
        self, document, relations: Sequence[RelationType]
    ) -> Dict[str, str]:
        """
        Everything a first round would send for one document, with
        placeholders where earlier responses would go.
        """
        prompts = {
            "summary": self.render_summary_prompt(document),
            "events": self.render_event_prompt("<summary of the document>"),
        }
        placeholder_events = [Event("<salient event 1>"), Event("<salient event 2>")]
        for relation in relations:
            prompts[f"graph_{relation.short_name}"] = self.render_graph_prompt(
                document, placeholder_events, relation
            )
        return prompts


def _python_prior_graphs(prior: Sequence[RelationGraph]) -> str:
    if not prior:
        return ""
    blocks = list()
    for graph in prior:
        name = GRAPH_NAMES[graph.relation]
        lines = [
            f"# The {graph.relation.short_name} relation graph of the events, "
            "already completed",
            f"{name} = nx.DiGraph()",
            "for event in event_list:",
            f"    {name}.add_node(event)",
        ]
        if graph.edges:
            lines.extend(add_edge_call(name, edge) for edge in graph.edges)
        else:
            lines.append(
                f"# No {graph.relation.short_name} relations were found "
                "between the events"
            )
        blocks.append("\n".join(lines))
    return "\n" + "\n\n".join(blocks) + "\n"


def _edges_as_json(edges: Sequence[RelationEdge]) -> str:
    return json.dumps(
        [{"head": edge.head.text, "tail": edge.tail.text} for edge in edges],
        ensure_ascii=False,
    )


def _json_description(relation: RelationType) -> str:
    return "\n".join(
        line.lstrip("# ") for line in RELATION_DESCRIPTIONS[relation].splitlines()
    )


def _json_prior_graphs(prior: Sequence[RelationGraph]) -> str:
    if not prior:
        return ""
    lines = [
        f"Already completed {graph.relation.short_name} relations: "
        f"{_edges_as_json(graph.edges)}"
        for graph in prior
    ]
    return "\n" + "\n".join(lines) + "\n"


def _json_existing_edges(existing_edges: Sequence[RelationEdge]) -> str:
    if not existing_edges:
        return ""
    return (
        "Relations found so far, to be repeated and extended: "
        + _edges_as_json(existing_edges)
    )


_default_library: Optional[PromptLibrary] = None


def default_library() -> PromptLibrary:
    global _default_library
    if _default_library is None:
        _default_library = PromptLibrary()
    return _default_library


def render_summary_prompt(document) -> str:
    return default_library().render_summary_prompt(document)


def render_event_prompt(summary: str) -> str:
    return default_library().render_event_prompt(summary)


def render_graph_prompt(document, event_list, relation, prior=(), existing_edges=()):
    return default_library().render_graph_prompt(
        document, event_list, relation, prior, existing_edges
    )


def render_grader_prompt(document, edge: RelationEdge) -> str:
    return default_library().render_grader_prompt(document, edge)


def render_mention_prompts(document, event: Event) -> Tuple[str, str]:
    return default_library().render_mention_prompts(document, event)


