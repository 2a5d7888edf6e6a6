"""
Turn model responses back into structured data: event lists, relation edges
from code (or JSON) completions, grader verdicts and sentence mentions.

Nothing here executes model output. Calls are located with a regular
expression and their argument lists are checked with ``ast``.
"""
import ast
import json
import re
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import mistune

from doc2eg.graph import Event, EventSource, RelationType, event_key
from doc2eg.prompts import GRAPH_NAMES, PROMPT_FORMATS


class EventListFormatError(ValueError):
    pass


class GraderParseError(ValueError):
    pass


class ParseStatus(Enum):
    OK = "ok"
    FORMAT_ERROR = "format_error"


class CodeBlockCollector(mistune.Renderer):
    """A renderer that only remembers the code blocks it is handed."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.code_blocks: List[Tuple[Optional[str], str]] = list()

    def block_code(self, code, lang=None):
        self.code_blocks.append((lang, code))
        return ""


def find_code_blocks(text: str) -> List[Tuple[Optional[str], str]]:
    collector = CodeBlockCollector()
    mistune.Markdown(renderer=collector)(text)
    return collector.code_blocks


def closing_paren(text: str, open_index: int) -> Optional[int]:
    """Index of the parenthesis closing the one at open_index, if any."""
    depth = 0
    for index in range(open_index, len(text)):
        char = text[index]
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
            if depth == 0:
                return index
    return None


def parenthesized_spans(text: str) -> List[str]:
    """Contents of every top-level balanced (...) group, in order."""
    spans = list()
    index = 0
    while True:
        start = text.find("(", index)
        if start == -1:
            return spans
        end = closing_paren(text, start)
        if end is None:
            return spans
        spans.append(text[start + 1 : end])
        index = end + 1


EVENT_ITEM_REGEX = re.compile(r"(?:^|\s)\d+\s*[.)]\s*(?=\()", re.MULTILINE)


def parse_event_list(response: str) -> List[Event]:
    """
    Extract the numbered ``(actor; trigger; object)`` tuples of an event
    list response, flattened to plain event texts.

    Raises:
        EventListFormatError: when no tuple could be found
    """
    events: List[Event] = list()
    seen = set()
    for match in EVENT_ITEM_REGEX.finditer(response):
        open_index = match.end()
        close_index = closing_paren(response, open_index)
        if close_index is None:
            continue
        content = response[open_index + 1 : close_index]
        if "\n" in content:
            continue
        parts = [part.strip() for part in content.split(";")]
        parts = [part for part in parts if part]
        if len(parts) < 2:
            continue
        event = Event(" ".join(parts), source=EventSource.LLM)
        if event in seen:
            continue
        seen.add(event)
        events.append(event)

    if not events:
        raise EventListFormatError("no numbered event tuples found in the response")
    return events


class ParsedGraphResponse(object):
    def __init__(
        self,
        edges: List[Tuple[Event, Event]],
        dropped: List[Tuple[str, str]],
        had_code_block: bool,
        parse_status: ParseStatus,
        raw_response: str,
    ):
        if parse_status == ParseStatus.FORMAT_ERROR and edges:
            raise ValueError("a format error cannot carry edges")
        self.edges = edges
        self.dropped = dropped
        self.had_code_block = had_code_block
        self.parse_status = parse_status
        self.raw_response = raw_response

    @property
    def format_error(self) -> bool:
        return self.parse_status == ParseStatus.FORMAT_ERROR

    def __repr__(self):
        return (
            f"ParsedGraphResponse({self.parse_status.value}, edges={len(self.edges)}, "
            f"dropped={len(self.dropped)}, had_code_block={self.had_code_block})"
        )


ADD_EDGE_REGEX = re.compile(r"\b([A-Za-z_]\w*)\s*\.\s*add_edge\s*\(")
DECLARATION_REGEX = re.compile(
    r"^\s*[A-Za-z_]\w*\s*=\s*(?:nx\.|networkx\.)?DiGraph\s*\(", re.MULTILINE
)
CURLY_DOUBLE_QUOTES = str.maketrans({"“": '"', "”": '"'})
# opening quote to the character that closes it
STRING_QUOTES = {'"': '"', "'": "'", "“": "”"}
# how far past the opening parenthesis a single call may reach
MAX_CALL_LENGTH = 4000


def _call_arguments(text: str, args_start: int) -> Optional[List[ast.expr]]:
    """
    Positional arguments of the call whose argument list starts at
    args_start, or None when no closing parenthesis makes it valid Python.
    """
    limit = min(len(text), args_start + MAX_CALL_LENGTH)
    position = args_start
    while True:
        close_index = text.find(")", position, limit)
        if close_index == -1:
            return None
        candidate = "_(" + text[args_start : close_index + 1]
        try:
            tree = ast.parse(candidate, mode="eval")
        except SyntaxError:
            position = close_index + 1
            continue
        if isinstance(tree.body, ast.Call):
            return tree.body.args
        position = close_index + 1


def _string_value(node: ast.expr) -> Optional[str]:
    if isinstance(node, ast.Constant) and isinstance(node.value, str):
        return node.value
    return None


def _in_comment(text: str, index: int) -> bool:
    """Whether a "#" outside any string literal precedes index on its line."""
    closing = None
    escaped = False
    for char in text[text.rfind("\n", 0, index) + 1 : index]:
        if closing is None:
            if char == "#":
                return True
            closing = STRING_QUOTES.get(char)
        elif escaped:
            escaped = False
        elif char == "\\":
            escaped = True
        elif char == closing:
            closing = None
    return False


def _python_candidates(
    text: str, relation: Optional[RelationType]
) -> Tuple[List[Tuple[str, str]], int]:
    """
    String endpoints of the add_edge calls in text. Each call is read as
    written first; only a call that is not valid Python that way is read
    again with curly double quotes turned into straight ones.
    """
    normalized = text.translate(CURLY_DOUBLE_QUOTES)
    other_graphs = set()
    if relation is not None:
        other_graphs = {name for r, name in GRAPH_NAMES.items() if r != relation}

    candidates = list()
    valid_calls = 0
    for match in ADD_EDGE_REGEX.finditer(text):
        if match.group(1) in other_graphs or _in_comment(text, match.start()):
            continue
        arguments = _call_arguments(text, match.end())
        if arguments is None:
            arguments = _call_arguments(normalized, match.end())
        if arguments is None:
            continue
        valid_calls += 1
        if len(arguments) < 2:
            continue
        head, tail = _string_value(arguments[0]), _string_value(arguments[1])
        if head is not None and tail is not None:
            candidates.append((head, tail))
    return candidates, valid_calls


def _json_array(text: str) -> Optional[list]:
    try:
        data = json.loads(text.strip())
    except ValueError:
        start, end = text.find("["), text.rfind("]")
        if start == -1 or end <= start:
            return None
        try:
            data = json.loads(text[start : end + 1])
        except ValueError:
            return None
    return data if isinstance(data, list) else None


def _json_candidates(text: str, code_blocks) -> Optional[List[Tuple[str, str]]]:
    array = None
    for _lang, code in code_blocks:
        array = _json_array(code)
        if array is not None:
            break
    if array is None:
        array = _json_array(text)
    if array is None:
        return None

    candidates = list()
    for item in array:
        if isinstance(item, dict):
            head, tail = item.get("head"), item.get("tail")
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            head, tail = item
        else:
            continue
        if isinstance(head, str) and isinstance(tail, str):
            candidates.append((head, tail))
    return candidates


def parse_graph_response(
    response: str,
    allowed_events: Iterable[Event],
    relation: Optional[RelationType] = None,
    prompt_format: str = "python",
) -> ParsedGraphResponse:
    """
    Extract relation edges from a completion.

    Args:
        response: raw model output
        allowed_events: the events of the document; endpoints are matched
          against them after normalization
        relation: the relation being generated. Calls on the other relations'
          graph variables (prior graphs the model echoes back) are ignored.
        prompt_format: "python" for code completions, "json" for the JSON
          prompt variant

    Returns:
        The matched edges in response order. Unknown endpoints and
        self-loops end up in ``dropped``; repeated edges are ignored.
    """
    if prompt_format not in PROMPT_FORMATS:
        raise ValueError(f"unknown prompt format {prompt_format!r}")

    code_blocks = find_code_blocks(response)
    had_code_block = bool(code_blocks)

    if prompt_format == "json":
        candidates = _json_candidates(response, code_blocks)
        if candidates is None:
            normalized = response.translate(CURLY_DOUBLE_QUOTES)
            candidates = _json_candidates(normalized, find_code_blocks(normalized))
        if candidates is None:
            return ParsedGraphResponse(
                [], [], had_code_block, ParseStatus.FORMAT_ERROR, response
            )
    else:
        candidates, valid_calls = _python_candidates(response, relation)
        if valid_calls == 0 and not DECLARATION_REGEX.search(response):
            return ParsedGraphResponse(
                [], [], had_code_block, ParseStatus.FORMAT_ERROR, response
            )

    by_key: Dict[str, Event] = {event.key: event for event in allowed_events}
    edges: List[Tuple[Event, Event]] = list()
    dropped: List[Tuple[str, str]] = list()
    seen = set()
    for head_text, tail_text in candidates:
        head = by_key.get(event_key(head_text))
        tail = by_key.get(event_key(tail_text))
        if head is None or tail is None or head == tail:
            dropped.append((head_text, tail_text))
            continue
        if (head, tail) in seen:
            continue
        seen.add((head, tail))
        edges.append((head, tail))

    return ParsedGraphResponse(edges, dropped, had_code_block, ParseStatus.OK, response)


class Verdict(Enum):
    YES = "yes"
    NO = "no"


class GraderVerdict(NamedTuple):
    verdict: Verdict
    explanation: str

    @property
    def accepted(self) -> bool:
        return self.verdict == Verdict.YES


SCORE_MARKER_REGEX = re.compile(r"score\s*:", re.IGNORECASE)
VERDICT_REGEX = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
EXPLANATION_REGEX = re.compile(r"explanation\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)


def parse_grader(response: str) -> GraderVerdict:
    marker = SCORE_MARKER_REGEX.search(response)
    offset = marker.end() if marker else 0
    match = VERDICT_REGEX.search(response, offset)
    if match is None:
        raise GraderParseError(
            f"no yes/no verdict in grader response {response[:80]!r}"
        )

    explanation_match = EXPLANATION_REGEX.search(response, match.end())
    if explanation_match:
        explanation = explanation_match.group(1).strip()
    else:
        explanation = response[match.end() :].strip(" .\n\t")
    return GraderVerdict(Verdict(match.group(1).lower()), explanation)


def mention_key(text: str) -> str:
    return " ".join(text.split()).casefold().strip(" \"'“”‘’.!?;:")


# shortest extraction that may be matched inside a longer sentence
MIN_CONTAINED_WORDS = 3


def match_sentence(extraction: str, sentence_keys: Sequence[str]) -> Set[int]:
    key = mention_key(extraction)
    if not key:
        return set()
    for index, sentence in enumerate(sentence_keys):
        if sentence == key:
            return {index}
    if len(key.split()) >= MIN_CONTAINED_WORDS:
        for index, sentence in enumerate(sentence_keys):
            if key in sentence:
                return {index}
    # a quote spanning several sentences mentions all of them
    return {
        index
        for index, sentence in enumerate(sentence_keys)
        if sentence and sentence in key
    }


def parse_mentions(responses: Iterable[str], document) -> Set[int]:
    """
    Map the parenthesized sentences quoted in mention responses to sentence
    indices of the document. Quotes that match no sentence are discarded.

    ``document`` is anything with a ``sentences`` list, or the list itself.
    """
    sentences = getattr(document, "sentences", document)
    sentence_keys = [mention_key(sentence) for sentence in sentences]
    indices: Set[int] = set()
    for response in responses:
        for extraction in parenthesized_spans(response):
            indices |= match_sentence(extraction, sentence_keys)
    return indices
