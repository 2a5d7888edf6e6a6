"""
Saliency features of an event within its document: how often it is
mentioned, how early it first appears and how far its mentions stretch.
"""
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from doc2eg.console_output import log_console
from doc2eg.document import NaiveLemmatizer, SentenceDoc, lemmatize_text
from doc2eg.gateway import Gateway, Stage
from doc2eg.graph import Event
from doc2eg.prompts import PromptLibrary, default_library
from doc2eg.responses import parse_mentions

MAX_MENTION_FOLLOWUPS = 5


class MentionSet(object):
    def __init__(self, event: Event, indices: Iterable[int], sentence_count: int):
        indices = sorted(set(indices))
        if indices and (indices[0] < 0 or indices[-1] >= sentence_count):
            raise ValueError(
                f"mention indices {indices} fall outside a document of "
                f"{sentence_count} sentences"
            )
        self.event = event
        self.indices: Tuple[int, ...] = tuple(indices)

    def __len__(self):
        return len(self.indices)

    def __bool__(self):
        return bool(self.indices)

    def __eq__(self, other):
        if not isinstance(other, MentionSet):
            return NotImplemented
        return self.event == other.event and self.indices == other.indices

    def __repr__(self):
        return f"MentionSet({self.event.text!r}, {list(self.indices)})"


class SaliencyScores(NamedTuple):
    frequency: float
    first_appearance: float
    stretch_size: float
    no_mention: bool = False


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    width = len(needle)
    return any(
        list(haystack[start : start + width]) == list(needle)
        for start in range(len(haystack) - width + 1)
    )


def detect_mentions_exact(
    doc: SentenceDoc, event: Event, lemmatizer=None
) -> MentionSet:
    """Sentences whose lemmas contain the event's lemmas as a contiguous run."""
    event_lemmas = lemmatize_text(event.text, lemmatizer or NaiveLemmatizer())
    indices = list()
    if event_lemmas:
        indices = [
            index
            for index, lemmas in enumerate(doc.lemmatized)
            if _contains_run(lemmas, event_lemmas)
        ]
    return MentionSet(event, indices, len(doc))


def detect_mentions_llm(
    doc: SentenceDoc,
    event: Event,
    gateway: Gateway,
    prompts: Optional[PromptLibrary] = None,
    max_followups: int = MAX_MENTION_FOLLOWUPS,
) -> MentionSet:
    """
    Ask the model which sentences mention the event, then keep asking for
    other sentences until a follow-up finds nothing new.
    """
    prompts = prompts or default_library()
    initial, followup = prompts.render_mention_prompts(doc, event)

    response = gateway.ask(initial, Stage.MENTION)
    found = parse_mentions([response], doc)
    history: List[Tuple[str, str]] = [(initial, response)]
    if not found:
        return MentionSet(event, (), len(doc))

    for _ in range(max_followups):
        response = gateway.ask(followup, Stage.MENTION, history=history)
        history.append((followup, response))
        new = parse_mentions([response], doc) - found
        if not new:
            break
        found |= new
    else:
        log_console.log(
            f"mention follow-ups for {event.text!r} stopped "
            f"after {max_followups} rounds"
        )
    return MentionSet(event, found, len(doc))


def saliency_scores(doc: SentenceDoc, mentions: MentionSet) -> SaliencyScores:
    if not mentions:
        return SaliencyScores(0.0, 1.0, 0.0, no_mention=True)
    sentence_count = len(doc)
    frequency = len(mentions) / sentence_count
    n = doc.n
    if n == 0:
        return SaliencyScores(frequency, 0.0, 0.0)
    first, last = mentions.indices[0], mentions.indices[-1]
    return SaliencyScores(frequency, first / n, (last - first) / n)


class DocumentSaliency(NamedTuple):
    document_id: str
    event_count: int
    frequency: float
    first_appearance: float
    stretch_size: float
    no_mention_events: int


class CorpusSaliency(NamedTuple):
    documents: List[DocumentSaliency]
    mean_event_count: float
    frequency: Optional[float]
    first_appearance: Optional[float]
    stretch_size: Optional[float]
    excluded_documents: List[str]

    def to_dict(self) -> Dict:
        return {
            "mean_event_count": self.mean_event_count,
            "frequency": self.frequency,
            "first_appearance": self.first_appearance,
            "stretch_size": self.stretch_size,
            "excluded_documents": self.excluded_documents,
            "documents": [document._asdict() for document in self.documents],
        }


def document_saliency(
    document_id: str, scores: Sequence[SaliencyScores]
) -> DocumentSaliency:
    count = len(scores)
    return DocumentSaliency(
        document_id=document_id,
        event_count=count,
        frequency=sum(s.frequency for s in scores) / count,
        first_appearance=sum(s.first_appearance for s in scores) / count,
        stretch_size=sum(s.stretch_size for s in scores) / count,
        no_mention_events=sum(1 for s in scores if s.no_mention),
    )


def corpus_saliency(
    per_document: Iterable[Tuple[str, Sequence[SaliencyScores]]]
) -> CorpusSaliency:
    """
    Average the features over the events of each document, then over
    documents. Documents without events are left out of the feature means
    and listed in ``excluded_documents``; they still count towards the mean
    event count.
    """
    documents: List[DocumentSaliency] = list()
    excluded: List[str] = list()
    event_counts: List[int] = list()
    for document_id, scores in per_document:
        event_counts.append(len(scores))
        if not scores:
            excluded.append(document_id)
            continue
        documents.append(document_saliency(document_id, scores))

    mean_event_count = sum(event_counts) / len(event_counts) if event_counts else 0.0
    if not documents:
        return CorpusSaliency([], mean_event_count, None, None, None, excluded)
    count = len(documents)
    return CorpusSaliency(
        documents=documents,
        mean_event_count=mean_event_count,
        frequency=sum(d.frequency for d in documents) / count,
        first_appearance=sum(d.first_appearance for d in documents) / count,
        stretch_size=sum(d.stretch_size for d in documents) / count,
        excluded_documents=excluded,
    )
