"""
Hungarian Graph Similarity: compare a predicted relation graph with a gold
one by optimally pairing their edges under an embedding-based distance.
Also holds the set-based agreement scores used between annotators.
"""
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import (
    Callable,
    Dict,
    Hashable,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import numpy as np
from scipy.optimize import linear_sum_assignment

from doc2eg.console_output import log_console
from doc2eg.graph import (
    RELATION_ORDER,
    Event,
    EventGraphBundle,
    RelationEdge,
    RelationGraph,
    RelationType,
    transitive_closure,
)

# cost of pairing an edge with nothing
PAD_COST = 1.0
# stands in for "no pair" when matching without padding; above any real cost
SENTINEL_COST = 2.0
# above this size the solver's own optimum is kept without the tie-break pass
TIE_BREAK_MAX_SIZE = 64


class Assignment(NamedTuple):
    columns: Tuple[int, ...]
    total_cost: float


def _validate_cost_matrix(matrix) -> np.ndarray:
    cost = np.asarray(matrix, dtype=float)
    if cost.size == 0:
        return cost.reshape(0, 0)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if np.any(cost < 0):
        raise ValueError("cost matrix must be non-negative")
    return cost


def _solve(cost: np.ndarray) -> Tuple[List[int], float]:
    if cost.size == 0:
        return [], 0.0
    rows, columns = linear_sum_assignment(cost)
    ordered = [int(column) for _row, column in sorted(zip(rows, columns))]
    return ordered, float(cost[rows, columns].sum())


def hungarian_min_cost(matrix, tie_break: bool = True) -> Assignment:
    """
    Minimum-cost perfect assignment of rows to columns.

    Args:
        matrix: square matrix of finite, non-negative costs
        tie_break: among optimal assignments return the lexicographically
          smallest one (row 0's column first). Skipped above
          TIE_BREAK_MAX_SIZE rows.

    Returns:
        Assignment whose ``columns[i]`` is the column given to row i
    """
    cost = _validate_cost_matrix(matrix)
    size = cost.shape[0]
    columns, best = _solve(cost)
    if not tie_break or size < 2 or size > TIE_BREAK_MAX_SIZE:
        return Assignment(tuple(columns), best)

    tolerance = 1e-9 * max(1.0, abs(best))
    free = set(range(size))
    fixed_cost = 0.0
    for row in range(size):
        remaining_rows = list(range(row + 1, size))
        for candidate in sorted(free):
            if candidate >= columns[row]:
                break
            rest = sorted(free - {candidate})
            lower_bound = fixed_cost + cost[row, candidate]
            if remaining_rows:
                lower_bound += cost[np.ix_(remaining_rows, rest)].min(axis=1).sum()
            if lower_bound > best + tolerance:
                continue
            sub_columns, sub_cost = _solve(cost[np.ix_(remaining_rows, rest)])
            if fixed_cost + cost[row, candidate] + sub_cost <= best + tolerance:
                columns[row] = candidate
                columns[row + 1 :] = [rest[index] for index in sub_columns]
                break
        free.discard(columns[row])
        fixed_cost += cost[row, columns[row]]

    total = float(sum(cost[row, column] for row, column in enumerate(columns)))
    return Assignment(tuple(columns), total)


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cosine similarity, clamped into [0, 1]."""
    norm_u, norm_v = np.linalg.norm(u), np.linalg.norm(v)
    if norm_u == 0 or norm_v == 0:
        raise ValueError("cosine distance is undefined for a zero-norm vector")
    distance = 1.0 - float(np.dot(u, v) / (norm_u * norm_v))
    return min(1.0, max(0.0, distance))


class EmbeddingLookup(object):
    """
    Embeds each distinct event once and remembers the vector.

    ``embed`` is any callable turning a list of texts into a list of
    vectors, usually ``Gateway.embed``.
    """

    def __init__(self, embed: Callable[[List[str]], List[np.ndarray]]):
        self._embed = embed
        self._vectors: Dict[str, np.ndarray] = dict()
        self._lock = threading.Lock()

    def prefetch(self, events: Iterable[Event]):
        with self._lock:
            missing: Dict[str, str] = dict()
            for event in events:
                if event.key not in self._vectors:
                    missing.setdefault(event.key, event.text)
            if missing:
                vectors = self._embed(list(missing.values()))
                for key, vector in zip(missing.keys(), vectors):
                    self._vectors[key] = np.asarray(vector, dtype=float)

    def vector(self, event: Event) -> np.ndarray:
        with self._lock:
            cached = self._vectors.get(event.key)
        if cached is None:
            self.prefetch([event])
            with self._lock:
                cached = self._vectors[event.key]
        return cached

    def __len__(self):
        return len(self._vectors)


def event_distance(a: Event, b: Event, lookup: EmbeddingLookup) -> float:
    if a == b:
        return 0.0
    return cosine_distance(lookup.vector(a), lookup.vector(b))


def edge_distance(e1: RelationEdge, e2: RelationEdge, lookup: EmbeddingLookup) -> float:
    """The larger of the head-to-head and tail-to-tail cosine distances."""
    if e1.relation != e2.relation:
        raise ValueError(
            f"cannot compare a {e1.relation.value} edge with a {e2.relation.value} edge"
        )
    return max(
        event_distance(e1.head, e2.head, lookup),
        event_distance(e1.tail, e2.tail, lookup),
    )


def distance_matrix(
    gold: Sequence, pred: Sequence, distance: Callable, lookup: EmbeddingLookup
) -> np.ndarray:
    matrix = np.zeros((len(gold), len(pred)), dtype=float)
    for row, gold_item in enumerate(gold):
        for column, pred_item in enumerate(pred):
            matrix[row, column] = distance(gold_item, pred_item, lookup)
    return matrix


def pad_square(matrix: np.ndarray, value: float) -> np.ndarray:
    size = max(matrix.shape)
    padded = np.full((size, size), value, dtype=float)
    padded[: matrix.shape[0], : matrix.shape[1]] = matrix
    return padded


class MatchedPair(NamedTuple):
    gold: object
    pred: object
    similarity: float


def _padded_similarity(gold, pred, distance, lookup) -> Tuple[float, List[MatchedPair]]:
    if not gold and not pred:
        return 1.0, []
    if not gold or not pred:
        return 0.0, []
    matrix = distance_matrix(gold, pred, distance, lookup)
    size = max(len(gold), len(pred))
    assignment = hungarian_min_cost(pad_square(matrix, PAD_COST))
    score = 1.0 - assignment.total_cost / size
    return min(1.0, max(0.0, score)), _matched_pairs(gold, pred, matrix, assignment)


def _matched_pairs(gold, pred, matrix, assignment) -> List[MatchedPair]:
    pairs = list()
    for row, column in enumerate(assignment.columns):
        if row < len(gold) and column < len(pred):
            pairs.append(
                MatchedPair(gold[row], pred[column], 1.0 - float(matrix[row, column]))
            )
    return pairs


def hgs(gold: RelationGraph, pred: RelationGraph, lookup: EmbeddingLookup) -> float:
    _check_same_relation(gold, pred)
    return _padded_similarity(
        list(gold.edges), list(pred.edges), edge_distance, lookup
    )[0]


def _unpadded_scores(
    gold, pred, distance, lookup
) -> Tuple[float, float, List[MatchedPair]]:
    if not gold and not pred:
        return 1.0, 1.0, []
    if not gold or not pred:
        return 0.0, 0.0, []
    matrix = distance_matrix(gold, pred, distance, lookup)
    assignment = hungarian_min_cost(pad_square(matrix, SENTINEL_COST))
    pairs = _matched_pairs(gold, pred, matrix, assignment)
    matched_similarity = sum(pair.similarity for pair in pairs)
    phgs = min(1.0, max(0.0, matched_similarity / len(pred)))
    rhgs = min(1.0, max(0.0, matched_similarity / len(gold)))
    return phgs, rhgs, pairs


def phgs_rhgs(
    gold: RelationGraph, pred: RelationGraph, lookup: EmbeddingLookup
) -> Tuple[float, float]:
    """
    Precision- and recall-oriented scores: edges are paired without padding
    and the matched similarity is divided by the predicted and the gold
    edge count respectively.
    """
    _check_same_relation(gold, pred)
    phgs, rhgs, _pairs = _unpadded_scores(
        list(gold.edges), list(pred.edges), edge_distance, lookup
    )
    return phgs, rhgs


def _check_same_relation(gold: RelationGraph, pred: RelationGraph):
    if gold.relation != pred.relation:
        raise ValueError(
            f"cannot compare a {gold.relation.value} graph with a "
            f"{pred.relation.value} graph"
        )


class RelationScore(NamedTuple):
    relation: RelationType
    hgs: float
    phgs: float
    rhgs: float
    n_gold: int
    n_pred: int
    matches: List[MatchedPair]

    def to_dict(self):
        return {
            "hgs": self.hgs,
            "phgs": self.phgs,
            "rhgs": self.rhgs,
            "gold_edges": self.n_gold,
            "pred_edges": self.n_pred,
            "matches": [
                {
                    "gold": [pair.gold.head.text, pair.gold.tail.text],
                    "pred": [pair.pred.head.text, pair.pred.tail.text],
                    "similarity": pair.similarity,
                }
                for pair in self.matches
            ],
        }


def compare_graphs(
    gold: RelationGraph,
    pred: RelationGraph,
    lookup: EmbeddingLookup,
    closure: bool = True,
) -> RelationScore:
    _check_same_relation(gold, pred)
    if closure:
        gold, pred = transitive_closure(gold), transitive_closure(pred)
    gold_edges, pred_edges = list(gold.edges), list(pred.edges)
    score, _padded_pairs = _padded_similarity(
        gold_edges, pred_edges, edge_distance, lookup
    )
    phgs, rhgs, pairs = _unpadded_scores(gold_edges, pred_edges, edge_distance, lookup)
    return RelationScore(
        relation=gold.relation,
        hgs=score,
        phgs=phgs,
        rhgs=rhgs,
        n_gold=len(gold_edges),
        n_pred=len(pred_edges),
        matches=pairs,
    )


def event_hgs(
    gold_events: Sequence[Event], pred_events: Sequence[Event], lookup: EmbeddingLookup
) -> float:
    """The padded assignment score applied to two event sets."""
    return _padded_similarity(
        list(gold_events), list(pred_events), event_distance, lookup
    )[0]


class DocumentReport(NamedTuple):
    document_id: str
    relations: Dict[RelationType, RelationScore]
    event_hgs: float
    n_gold_events: int

    def to_dict(self):
        return {
            "document_id": self.document_id,
            "event_hgs": self.event_hgs,
            "gold_events": self.n_gold_events,
            "relations": {
                relation.value: score.to_dict()
                for relation, score in self.relations.items()
            },
        }


def compare_bundles(
    gold: EventGraphBundle,
    pred: EventGraphBundle,
    lookup: EmbeddingLookup,
    closure: bool = True,
    relations: Sequence[RelationType] = RELATION_ORDER,
) -> DocumentReport:
    return DocumentReport(
        document_id=gold.document_id,
        relations={
            relation: compare_graphs(
                gold.graph(relation), pred.graph(relation), lookup, closure
            )
            for relation in relations
        },
        event_hgs=event_hgs(gold.events, pred.events, lookup),
        n_gold_events=len(gold.events),
    )


class CorpusScore(NamedTuple):
    hgs: Optional[float]
    phgs: Optional[float]
    rhgs: Optional[float]
    weight: int
    zero_weight_documents: List[str]

    @property
    def undefined(self) -> bool:
        return self.weight == 0

    def to_dict(self):
        return {
            "hgs": self.hgs,
            "phgs": self.phgs,
            "rhgs": self.rhgs,
            "gold_edges": self.weight,
            "undefined": self.undefined,
            "zero_weight_documents": self.zero_weight_documents,
        }


def weighted_average(scored: Iterable[Tuple[float, int]]) -> Optional[float]:
    """Mean of the scores weighted by their weights; None when no weight."""
    total_weight = 0
    total = 0.0
    for score, weight in scored:
        total += score * weight
        total_weight += weight
    if total_weight == 0:
        return None
    return total / total_weight


def _corpus_score(scored: Sequence[Tuple[str, RelationScore]]) -> CorpusScore:
    return CorpusScore(
        hgs=weighted_average((score.hgs, score.n_gold) for _id, score in scored),
        phgs=weighted_average((score.phgs, score.n_gold) for _id, score in scored),
        rhgs=weighted_average((score.rhgs, score.n_gold) for _id, score in scored),
        weight=sum(score.n_gold for _id, score in scored),
        zero_weight_documents=[
            document_id for document_id, score in scored if score.n_gold == 0
        ],
    )


class HgsReport(NamedTuple):
    documents: List[DocumentReport]
    relations: Dict[RelationType, CorpusScore]
    overall: CorpusScore
    event_hgs: Optional[float]
    closure: bool

    def to_dict(self):
        return {
            "closure": self.closure,
            "event_hgs": self.event_hgs,
            "overall": self.overall.to_dict(),
            "relations": {
                relation.value: score.to_dict()
                for relation, score in self.relations.items()
            },
            "documents": [document.to_dict() for document in self.documents],
        }


def corpus_hgs(
    pairs: Iterable[Tuple[EventGraphBundle, EventGraphBundle]],
    lookup: EmbeddingLookup,
    closure: bool = True,
    relations: Sequence[RelationType] = RELATION_ORDER,
    max_workers: int = 1,
) -> HgsReport:
    """
    Score (gold, predicted) bundle pairs and weight every document by its
    number of gold edges. Documents without gold edges carry no weight and
    are listed per relation.
    """
    pairs = list(pairs)
    lookup.prefetch(
        event for gold, pred in pairs for event in list(gold.events) + list(pred.events)
    )

    def compare(pair):
        gold, pred = pair
        return compare_bundles(gold, pred, lookup, closure, relations)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            documents = list(executor.map(compare, pairs))
    else:
        documents = [compare(pair) for pair in pairs]

    per_relation = {
        relation: _corpus_score(
            [
                (document.document_id, document.relations[relation])
                for document in documents
            ]
        )
        for relation in relations
    }
    pooled = [
        (document.document_id, document.relations[relation])
        for document in documents
        for relation in relations
    ]
    overall = _corpus_score(pooled)
    overall = overall._replace(
        zero_weight_documents=[
            document.document_id
            for document in documents
            if all(document.relations[r].n_gold == 0 for r in relations)
        ]
    )
    for relation, score in per_relation.items():
        if score.undefined:
            log_console.log(
                f"no gold {relation.value} edges in the corpus, the score is undefined"
            )
    event_score = weighted_average(
        (document.event_hgs, document.n_gold_events) for document in documents
    )
    return HgsReport(documents, per_relation, overall, event_score, closure)


class AgreementScore(NamedTuple):
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, size_1: int, size_2: int) -> "AgreementScore":
        if size_1 == 0 and size_2 == 0:
            return cls(1.0, 1.0, 1.0)
        precision = overlap / size_1 if size_1 else 0.0
        recall = overlap / size_2 if size_2 else 0.0
        return cls(precision, recall, 2 * overlap / (size_1 + size_2))


def set_agreement(s1: Iterable[Hashable], s2: Iterable[Hashable]) -> AgreementScore:
    s1, s2 = set(s1), set(s2)
    return AgreementScore.from_counts(len(s1 & s2), len(s1), len(s2))


class AgreementReport(NamedTuple):
    events: AgreementScore
    relations: Dict[RelationType, AgreementScore]
    documents: int

    def to_dict(self):
        return {
            "documents": self.documents,
            "events": self.events._asdict(),
            "relations": {
                relation.value: score._asdict()
                for relation, score in self.relations.items()
            },
        }


def corpus_agreement(
    pairs: Iterable[Tuple[EventGraphBundle, EventGraphBundle]],
    relations: Sequence[RelationType] = RELATION_ORDER,
    closure: bool = False,
) -> AgreementReport:
    """
    Agreement between two annotations of the same documents, pooled over
    documents. Events agree by event equality, relations by (relation,
    head, tail).
    """
    counts: Dict[object, List[int]] = {"events": [0, 0, 0]}
    counts.update({relation: [0, 0, 0] for relation in relations})
    documents = 0

    def add(key, first: Set, second: Set):
        counts[key][0] += len(first & second)
        counts[key][1] += len(first)
        counts[key][2] += len(second)

    for first, second in pairs:
        documents += 1
        add("events", set(first.events), set(second.events))
        for relation in relations:
            graph_1, graph_2 = first.graph(relation), second.graph(relation)
            if closure:
                graph_1 = transitive_closure(graph_1)
                graph_2 = transitive_closure(graph_2)
            add(relation, set(graph_1.edges), set(graph_2.edges))

    return AgreementReport(
        events=AgreementScore.from_counts(*counts["events"]),
        relations={
            relation: AgreementScore.from_counts(*counts[relation])
            for relation in relations
        },
        documents=documents,
    )
