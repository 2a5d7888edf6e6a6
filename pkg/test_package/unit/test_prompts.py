import random

import pytest

import doc2eg.prompts as prompts
from doc2eg.document import DocumentRecord
from doc2eg.gateway import Stage
from doc2eg.responses import parse_graph_response
from test_package.utils import CAUSAL, HIERARCHICAL, TEMPORAL, edge, events, graph

DOCUMENT = DocumentRecord("doc-1", "X happened. Then Y happened.")
EVENTS = events("A", "B", "C")


@pytest.fixture()
def library():
    return prompts.PromptLibrary()


def test_summary_prompt_wraps_document_in_triple_quotes(library):
    prompt = library.render_summary_prompt(DocumentRecord("d", "X happened."))

    assert '"""\nX happened.\n"""' in prompt
    assert prompt.startswith("Write a summary of the document below")


def test_summary_prompt_rejects_empty_body(library):
    with pytest.raises(prompts.RenderError):
        library.render_summary_prompt(DocumentRecord("d", "   "))


def test_summary_prompt_escapes_triple_quotes(library):
    prompt = library.render_summary_prompt(
        DocumentRecord("d", 'He wrote """hello""" and left"')
    )

    assert prompt.count('"""') == 2


def test_event_prompt_has_tuple_example_and_keeps_newlines(library):
    prompt = library.render_event_prompt("First line.\nSecond line.")

    assert "(John; married; Alice)" in prompt
    assert '"""First line.\nSecond line."""' in prompt


def test_event_prompt_rejects_empty_summary(library):
    with pytest.raises(prompts.RenderError):
        library.render_event_prompt("\n")


def test_graph_prompt_round_one_has_no_priors(library):
    prompt = library.render_graph_prompt(DOCUMENT, EVENTS, HIERARCHICAL)

    assert "hierarchical_graph = nx.DiGraph()" in prompt
    assert 'event_list = ["A", "B", "C"]' in prompt
    assert "temporal_graph" not in prompt
    assert "already completed" not in prompt
    assert prompt.endswith(
        "Explain the reason for each added edge as a comment after each function call\n"
    )


def test_graph_prompt_renders_prior_graph_edges(library):
    prior = graph("ABC", [("A", "B")], HIERARCHICAL)

    prompt = library.render_graph_prompt(DOCUMENT, EVENTS, TEMPORAL, prior=[prior])

    call = 'hierarchical_graph.add_edge("A", "B")'
    assert call in prompt
    assert prompt.index(call) < prompt.index("temporal_graph = nx.DiGraph()")


def test_graph_prompt_marks_empty_prior_graphs(library):
    prior = graph("ABC", [], HIERARCHICAL)

    prompt = library.render_graph_prompt(DOCUMENT, EVENTS, TEMPORAL, prior=[prior])

    assert "# No hierarchical relations were found between the events" in prompt


def test_graph_prompt_prefills_existing_edges(library):
    existing = [edge("A", "B", CAUSAL), edge("B", "C", CAUSAL)]

    prompt = library.render_graph_prompt(
        DOCUMENT, EVENTS, CAUSAL, existing_edges=existing
    )

    assert prompt.endswith(
        'causal_graph.add_edge("A", "B")\ncausal_graph.add_edge("B", "C")\n'
    )


def test_graph_prompt_rejects_existing_edge_of_other_relation(library):
    with pytest.raises(prompts.RenderError):
        library.render_graph_prompt(
            DOCUMENT, EVENTS, CAUSAL, existing_edges=[edge("A", "B", TEMPORAL)]
        )


def test_graph_prompt_needs_events(library):
    with pytest.raises(prompts.RenderError):
        library.render_graph_prompt(DOCUMENT, [], CAUSAL)


def test_add_edge_call_escapes_quotes():
    call = prompts.add_edge_call("temporal_graph", edge('He said "no"', "B"))

    assert call == 'temporal_graph.add_edge("He said \\"no\\"", "B")'


def test_rendered_edges_parse_back_in_order():
    texts = [
        'He said "no"',
        "Campbell called the cuts “necessary”",
        "Channel #4 aired",
        "a back\\slash",
        "it's (partly) over",
        "Prices rose",
    ]
    rng = random.Random(11)
    for _ in range(200):
        relation = rng.choice([HIERARCHICAL, TEMPORAL, CAUSAL])
        order = rng.sample(texts, len(texts))
        pairs = [
            (order[i], order[j])
            for i in range(len(order))
            for j in range(i + 1, len(order))
            if rng.random() < 0.3
        ]
        rng.shuffle(pairs)
        rendered = graph(order, pairs, relation)
        response = "\n".join(
            prompts.add_edge_call(prompts.GRAPH_NAMES[relation], item)
            for item in rendered.edges
        )

        parsed = parse_graph_response(response, rendered.nodes, relation)

        assert [(h.text, t.text) for h, t in parsed.edges] == pairs
        assert parsed.dropped == []


def test_json_graph_prompt():
    library = prompts.PromptLibrary(prompt_format="json")
    prior = graph("ABC", [("A", "B")], HIERARCHICAL)

    prompt = library.render_graph_prompt(
        DOCUMENT,
        EVENTS,
        TEMPORAL,
        prior=[prior],
        existing_edges=[edge("B", "C")],
    )

    assert 'Events: ["A", "B", "C"]' in prompt
    assert (
        'Already completed hierarchical relations: [{"head": "A", "tail": "B"}]'
        in prompt
    )
    assert '[{"head": "B", "tail": "C"}]' in prompt
    assert "nx.DiGraph" not in prompt


def test_unknown_prompt_format():
    with pytest.raises(ValueError):
        prompts.PromptLibrary(prompt_format="yaml")


def test_grader_prompt_states_the_edge(library):
    prompt = library.render_grader_prompt(DOCUMENT, edge("A", "B", HIERARCHICAL))

    assert 'Here is the answer: Event "A" is a subevent of event "B".' in prompt
    assert "Here are the facts: X happened. Then Y happened." in prompt


def test_mention_prompts(library):
    initial, followup = library.render_mention_prompts(DOCUMENT, events("X")[0])

    assert 'mentions the event "X"' in initial
    assert '"""X happened. Then Y happened."""' in initial
    assert followup.startswith("Is there any other sentence")


def test_templates_dir_overrides_one_file(tmp_path):
    (tmp_path / "summary.txt").write_text("Summarize: {document}\n")
    library = prompts.PromptLibrary(tmp_path)

    assert library.render_summary_prompt(DOCUMENT) == (
        "Summarize: X happened. Then Y happened.\n"
    )
    assert "(John; married; Alice)" in library.render_event_prompt("text")


def test_template_with_unbound_slot(tmp_path):
    (tmp_path / "summary.txt").write_text("{document} in {language}")

    with pytest.raises(prompts.RenderError, match="language"):
        prompts.PromptLibrary(tmp_path).render_summary_prompt(DOCUMENT)


def test_template_braces_that_are_not_slots_stay_literal():
    template = prompts.PromptTemplate("t", Stage.GRAPH, 'a {"head": 1} {slot}')

    assert template.slots == ["slot"]
    assert template.render(slot="v") == 'a {"head": 1} v\n'


def test_unknown_template_name(library):
    with pytest.raises(KeyError):
        library.template("translation")


def test_dry_run_prompts(library):
    rendered = library.dry_run_prompts(DOCUMENT, [HIERARCHICAL, CAUSAL])

    assert list(rendered) == ["summary", "events", "graph_hierarchical", "graph_causal"]
    assert "causal_graph = nx.DiGraph()" in rendered["graph_causal"]


def test_module_level_helpers_use_default_templates():
    expected = prompts.PromptLibrary().render_summary_prompt(DOCUMENT)

    assert prompts.render_summary_prompt(DOCUMENT) == expected
