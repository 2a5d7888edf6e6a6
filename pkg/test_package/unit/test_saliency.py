import pytest

import doc2eg.saliency as sal
from doc2eg.document import DocumentRecord, SentenceDoc, build_sentence_doc
from doc2eg.gateway import Gateway, ScriptedGenerator, Stage
from doc2eg.graph import Event

VOTERS = build_sentence_doc(
    DocumentRecord(
        "voters",
        "Voters protested taxes. The mayor resigned. Prices rose. "
        "Angry voters protested again. Nothing changed. The council met.",
    )
)


def sentence_doc(sentence_count):
    sentences = [f"Sentence {index}." for index in range(sentence_count)]
    return SentenceDoc("d", sentences, [[s] for s in sentences])


def scores(frequency, first=0.0, stretch=0.0):
    return sal.SaliencyScores(frequency, first, stretch)


def test_exact_mentions_need_a_contiguous_lemma_run():
    doc = build_sentence_doc(
        DocumentRecord("d", "He wins race today. He wins the race.")
    )

    mentions = sal.detect_mentions_exact(doc, Event("won race"))
    assert mentions.indices == ()

    mentions = sal.detect_mentions_exact(doc, Event("wins race"))
    assert mentions.indices == (0,)


def test_exact_mentions_in_several_sentences():
    mentions = sal.detect_mentions_exact(VOTERS, Event("voters protested"))

    assert mentions.indices == (0, 3)


def test_mention_set_rejects_out_of_range_indices():
    with pytest.raises(ValueError):
        sal.MentionSet(Event("x"), [0, 5], sentence_count=5)


def test_saliency_scores_spread_mentions():
    result = sal.saliency_scores(
        sentence_doc(10), sal.MentionSet(Event("x"), {9, 0, 4}, 10)
    )

    assert result.frequency == pytest.approx(0.3)
    assert result.first_appearance == 0.0
    assert result.stretch_size == 1.0
    assert not result.no_mention


def test_saliency_scores_single_mention():
    result = sal.saliency_scores(sentence_doc(10), sal.MentionSet(Event("x"), {3}, 10))

    assert result.frequency == pytest.approx(0.1)
    assert result.first_appearance == pytest.approx(3 / 9)
    assert result.stretch_size == 0.0


def test_saliency_scores_single_sentence_document():
    result = sal.saliency_scores(sentence_doc(1), sal.MentionSet(Event("x"), {0}, 1))

    assert result == sal.SaliencyScores(1.0, 0.0, 0.0)


def test_saliency_scores_without_mentions():
    result = sal.saliency_scores(sentence_doc(4), sal.MentionSet(Event("x"), (), 4))

    assert result == sal.SaliencyScores(0.0, 1.0, 0.0, no_mention=True)


def mention_gateway(answers):
    """Answers the initial mention prompt and each follow-up in turn."""

    def answer(request):
        return answers[min(len(request.history), len(answers) - 1)]

    generator = ScriptedGenerator(fallback=answer)
    return Gateway(generator), generator


def test_llm_mentions_follow_up_until_nothing_new():
    gateway, generator = mention_gateway(
        ["(The mayor resigned.)", "(Angry voters protested again.)", "No."]
    )

    mentions = sal.detect_mentions_llm(VOTERS, Event("the mayor resigned"), gateway)

    assert mentions.indices == (1, 3)
    assert len(generator.calls) == 3
    assert all(call.stage == Stage.MENTION for call in generator.calls)


def test_llm_mentions_unknown_sentence():
    gateway, _ = mention_gateway(["(A parade was held downtown.)"])

    mentions = sal.detect_mentions_llm(VOTERS, Event("parade"), gateway)

    assert not mentions


def test_llm_mentions_empty_first_answer_skips_follow_ups():
    gateway, generator = mention_gateway(["None of the sentences do."])

    mentions = sal.detect_mentions_llm(VOTERS, Event("parade"), gateway)

    assert not mentions
    assert len(generator.calls) == 1


def test_llm_mentions_stop_after_follow_up_cap():
    answers = [f"({sentence})" for sentence in VOTERS.sentences]
    gateway, generator = mention_gateway(answers)

    mentions = sal.detect_mentions_llm(
        VOTERS, Event("everything"), gateway, max_followups=2
    )

    assert mentions.indices == (0, 1, 2)
    assert len(generator.calls) == 3


def test_corpus_saliency_averages_documents():
    result = sal.corpus_saliency(
        [
            ("a", [scores(0.1), scores(0.3)]),
            ("b", [scores(0.4)]),
        ]
    )

    assert result.frequency == pytest.approx(0.3)
    assert result.mean_event_count == pytest.approx(1.5)
    assert [document.event_count for document in result.documents] == [2, 1]


def test_corpus_saliency_excludes_documents_without_events():
    result = sal.corpus_saliency(
        [("a", [scores(0.2, 0.5, 0.25)]), ("empty", [])]
    )

    assert result.excluded_documents == ["empty"]
    assert result.frequency == pytest.approx(0.2)
    assert result.first_appearance == pytest.approx(0.5)
    assert result.stretch_size == pytest.approx(0.25)
    assert result.mean_event_count == pytest.approx(0.5)


def test_corpus_saliency_counts_unmentioned_events():
    result = sal.corpus_saliency(
        [("a", [scores(0.5), sal.SaliencyScores(0.0, 1.0, 0.0, no_mention=True)])]
    )

    assert result.documents[0].no_mention_events == 1
    assert result.first_appearance == pytest.approx(0.5)


def test_corpus_saliency_of_nothing():
    result = sal.corpus_saliency([])

    assert result.frequency is None
    assert result.mean_event_count == 0.0
