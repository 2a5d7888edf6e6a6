import json
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence

import chardet

from doc2eg.console_output import log_console

MIN_WORDS = 100
MAX_WORDS = 8500


class CorpusFormatError(ValueError):
    pass


class DocumentRecord(object):
    def __init__(self, id: str, body: str, title: str = ""):
        self.id = id
        self.title = title
        self.body = body

    @property
    def word_count(self) -> int:
        return len(self.body.split())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DocumentRecord":
        if not isinstance(data, dict):
            raise CorpusFormatError("a document must be a JSON object")
        document_id = data.get("id")
        if not isinstance(document_id, (str, int)) or isinstance(document_id, bool):
            raise CorpusFormatError("a document needs a string id")
        if not isinstance(data.get("body"), str):
            raise CorpusFormatError(f"document {document_id!r} needs a string body")
        title = data.get("title") or ""
        if not isinstance(title, str):
            raise CorpusFormatError(f"document {document_id!r} has a non-string title")
        return cls(id=str(document_id), body=data["body"], title=title)

    def to_dict(self) -> Dict[str, str]:
        return {"id": self.id, "title": self.title, "body": self.body}

    def __eq__(self, other):
        if not isinstance(other, DocumentRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"DocumentRecord({self.id!r}, words={self.word_count})"


def read_text_lines(file_path: Path) -> List[str]:
    if not isinstance(file_path, Path):
        file_path = Path(file_path)

    try:
        with open(file_path, encoding="utf-8") as file_handle:
            return file_handle.readlines()
    except UnicodeDecodeError:
        with open(file_path, "rb") as file_handle:
            detected_encoding = chardet.detect(file_handle.read())
        log_console.log(
            f"{file_path} is not UTF-8, reading it as {detected_encoding['encoding']}"
        )
        with open(file_path, encoding=detected_encoding["encoding"]) as file_handle:
            return file_handle.readlines()


def read_corpus(file_path: Path) -> List[DocumentRecord]:
    """
    Read a JSON-lines corpus with one {"id", "title", "body"} object per line.

    Raises:
        CorpusFormatError: on malformed lines or repeated ids
    """
    records: List[DocumentRecord] = list()
    seen_ids = set()
    for line_number, line in enumerate(read_text_lines(file_path), start=1):
        if not line.strip():
            continue
        try:
            record = DocumentRecord.from_dict(json.loads(line))
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"{file_path}:{line_number}: {e}") from e
        except CorpusFormatError as e:
            raise CorpusFormatError(f"{file_path}:{line_number}: {e}") from e
        if record.id in seen_ids:
            raise CorpusFormatError(
                f"{file_path}:{line_number}: duplicate document id {record.id!r}"
            )
        seen_ids.add(record.id)
        records.append(record)
    return records


def read_id_list(file_path: Path) -> List[str]:
    return [line.strip() for line in read_text_lines(file_path) if line.strip()]


class ExclusionReason(Enum):
    TOO_SHORT = "too_short"
    TOO_LONG = "too_long"
    NOT_SELECTED = "not_selected"


class Exclusion(NamedTuple):
    record: DocumentRecord
    reason: ExclusionReason
    word_count: int


class FilterResult(NamedTuple):
    kept: List[DocumentRecord]
    excluded: List[Exclusion]


def filter_documents(
    records: Iterable[DocumentRecord],
    min_words: int = MIN_WORDS,
    max_words: int = MAX_WORDS,
    allowed_ids: Optional[Iterable[str]] = None,
) -> FilterResult:
    """Keep documents whose whitespace word count lies in [min_words, max_words]."""
    if min_words >= max_words:
        raise ValueError(
            f"min_words ({min_words}) must be below max_words ({max_words})"
        )
    allowed = set(allowed_ids) if allowed_ids is not None else None

    kept: List[DocumentRecord] = list()
    excluded: List[Exclusion] = list()
    for record in records:
        count = record.word_count
        if allowed is not None and record.id not in allowed:
            excluded.append(Exclusion(record, ExclusionReason.NOT_SELECTED, count))
        elif count < min_words:
            excluded.append(Exclusion(record, ExclusionReason.TOO_SHORT, count))
        elif count > max_words:
            excluded.append(Exclusion(record, ExclusionReason.TOO_LONG, count))
        else:
            kept.append(record)
    return FilterResult(kept, excluded)


PARAGRAPH_REGEX = re.compile(r"\n\s*\n")
SENTENCE_BOUNDARY_REGEX = re.compile(
    r"(?:(?<=[.!?])|(?<=[.!?][\"'”’)\]]))\s+(?=[\"'“‘(\[]?[A-Z])"
)
TOKEN_REGEX = re.compile(r"\w+(?:'\w+)?")


class RegexSentenceSplitter(object):
    """Splits on paragraph breaks and on .!? followed by a capitalized word."""

    def split(self, text: str) -> List[str]:
        sentences = list()
        for paragraph in PARAGRAPH_REGEX.split(text):
            for sentence in SENTENCE_BOUNDARY_REGEX.split(paragraph.strip()):
                sentence = " ".join(sentence.split())
                if sentence:
                    sentences.append(sentence)
        return sentences


class NltkSentenceSplitter(object):
    def __init__(self):
        try:
            import nltk
        except ImportError as e:
            raise ImportError(
                "the nltk sentence splitter needs the nltk extra: "
                "pip install doc2eg[nltk]"
            ) from e
        self._tokenize = nltk.sent_tokenize

    def split(self, text: str) -> List[str]:
        sentences = list()
        for paragraph in PARAGRAPH_REGEX.split(text):
            for sentence in self._tokenize(paragraph.strip()):
                sentence = " ".join(sentence.split())
                if sentence:
                    sentences.append(sentence)
        return sentences


class NaiveLemmatizer(object):
    """Suffix stripping for -ing, -ed, -es and -s."""

    def lemmatize(self, token: str) -> str:
        token = token.lower()
        if token.endswith("ing") and len(token) > 5:
            return token[:-3]
        if token.endswith("ed") and len(token) > 4:
            return token[:-2]
        if token.endswith("es") and re.search(r"(?:s|x|z|ch|sh)es$", token):
            return token[:-2]
        if token.endswith("s") and len(token) > 3 and not token.endswith("ss"):
            return token[:-1]
        return token


class NltkLemmatizer(object):
    def __init__(self):
        try:
            from nltk.stem import WordNetLemmatizer
        except ImportError as e:
            raise ImportError(
                "the nltk lemmatizer needs the nltk extra: pip install doc2eg[nltk]"
            ) from e
        self._lemmatizer = WordNetLemmatizer()

    def lemmatize(self, token: str) -> str:
        token = token.lower()
        as_verb = self._lemmatizer.lemmatize(token, "v")
        if as_verb != token:
            return as_verb
        return self._lemmatizer.lemmatize(token, "n")


SPLITTERS = {"regex": RegexSentenceSplitter, "nltk": NltkSentenceSplitter}
LEMMATIZERS = {"naive": NaiveLemmatizer, "nltk": NltkLemmatizer}


def get_splitter(name: str = "regex"):
    try:
        return SPLITTERS[name]()
    except KeyError:
        raise ValueError(f"unknown sentence splitter {name!r}") from None


def get_lemmatizer(name: str = "naive"):
    try:
        return LEMMATIZERS[name]()
    except KeyError:
        raise ValueError(f"unknown lemmatizer {name!r}") from None


def lemmatize_text(text: str, lemmatizer=None) -> List[str]:
    lemmatizer = lemmatizer or NaiveLemmatizer()
    return [lemmatizer.lemmatize(token) for token in TOKEN_REGEX.findall(text)]


class SentenceDoc(object):
    def __init__(
        self,
        document_id: str,
        sentences: Sequence[str],
        lemmatized: Sequence[Sequence[str]],
    ):
        if not sentences:
            raise ValueError(f"document {document_id!r} has no sentences")
        if len(sentences) != len(lemmatized):
            raise ValueError("sentences and lemmatized views must be parallel")
        self.document_id = document_id
        self.sentences = list(sentences)
        self.lemmatized = [list(lemmas) for lemmas in lemmatized]

    @property
    def n(self) -> int:
        """Index of the last sentence."""
        return len(self.sentences) - 1

    @property
    def body(self) -> str:
        return " ".join(self.sentences)

    def __len__(self):
        return len(self.sentences)

    def __repr__(self):
        return f"SentenceDoc({self.document_id!r}, sentences={len(self.sentences)})"


def build_sentence_doc(
    record: DocumentRecord, splitter=None, lemmatizer=None
) -> SentenceDoc:
    splitter = splitter or RegexSentenceSplitter()
    lemmatizer = lemmatizer or NaiveLemmatizer()
    sentences = splitter.split(record.body)
    return SentenceDoc(
        record.id,
        sentences,
        [lemmatize_text(sentence, lemmatizer) for sentence in sentences],
    )
