"""
Events, typed relation edges and the directed acyclic graphs built from them.
"""
import json
from enum import Enum
from typing import Any, Dict, Hashable, Iterable, List, NamedTuple, Optional, Sequence

import networkx as nx


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class UnknownEventError(GraphError):
    pass


class BundleFormatError(GraphError):
    pass


class EventSource(Enum):
    LLM = "llm"
    HUMAN = "human"
    EXTERNAL = "external"


class RelationType(Enum):
    HIERARCHICAL = "is_subevent_of"
    TEMPORAL = "happened_before"
    CAUSAL = "caused_by"

    @property
    def short_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "RelationType":
        """Accept either the serialized name (is_subevent_of) or the short one."""
        for relation in cls:
            if name in (relation.value, relation.short_name):
                return relation
        raise ValueError(f"unknown relation type: {name!r}")


RELATION_ORDER = (
    RelationType.HIERARCHICAL,
    RelationType.TEMPORAL,
    RelationType.CAUSAL,
)


def normalize_event_text(text: str) -> str:
    return " ".join(text.split())


def event_key(text: str) -> str:
    return normalize_event_text(text).casefold()


class Event(object):
    __slots__ = ("text", "source", "key")

    def __init__(self, text: str, source: Optional[EventSource] = None):
        normalized = normalize_event_text(text)
        if not normalized:
            raise GraphError("an event needs a non-empty text")
        self.text = normalized
        self.source = source
        self.key = normalized.casefold()

    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __lt__(self, other):
        return self.text < other.text

    def __repr__(self):
        return f"Event({self.text!r})"

    def __str__(self):
        return self.text


class RelationEdge(object):
    __slots__ = ("head", "tail", "relation")

    def __init__(self, head: Event, tail: Event, relation: RelationType):
        if head == tail:
            raise SelfLoopError(f"self-loop on event {head.text!r}")
        self.head = head
        self.tail = tail
        self.relation = relation

    @property
    def pair(self):
        return self.head, self.tail

    def sort_key(self):
        return self.relation.value, self.head.text, self.tail.text

    def __eq__(self, other):
        if not isinstance(other, RelationEdge):
            return NotImplemented
        return (
            self.relation == other.relation
            and self.head == other.head
            and self.tail == other.tail
        )

    def __hash__(self):
        return hash((self.relation, self.head, self.tail))

    def __repr__(self):
        return (
            f"RelationEdge({self.head.text!r} -{self.relation.value}-> "
            f"{self.tail.text!r})"
        )


def _endpoints(edge) -> tuple:
    if isinstance(edge, RelationEdge):
        return edge.pair
    head, tail = edge
    return head, tail


def detect_cycle(edges, nodes: Optional[Iterable[Hashable]] = None) -> Optional[List]:
    """
    Look for a directed cycle in a candidate edge set.

    Edges can be RelationEdge objects, plain (head, tail) pairs or a whole
    RelationGraph, whose nodes are used unless others are given. Nodes and
    edges are visited in the order given, so the witness is deterministic.

    Returns:
        The vertices of one cycle in traversal order, or None for a DAG.
    """
    if isinstance(edges, RelationGraph):
        if nodes is None:
            nodes = edges.nodes
        edges = edges.edges
    digraph = nx.DiGraph()
    if nodes is not None:
        digraph.add_nodes_from(nodes)
    digraph.add_edges_from(_endpoints(edge) for edge in edges)
    try:
        cycle_edges = nx.find_cycle(digraph, orientation="original")
    except nx.NetworkXNoCycle:
        return None
    return [head for head, _tail, *_direction in cycle_edges]


class RelationGraph(object):
    """
    An immutable DAG over events for a single relation type.

    Node and edge order follow construction order; equality ignores it.
    """

    def __init__(
        self,
        relation: RelationType,
        nodes: Iterable[Event],
        edges: Iterable[RelationEdge] = (),
    ):
        self.relation = relation
        node_list: List[Event] = list()
        seen = set()
        for node in nodes:
            if node not in seen:
                seen.add(node)
                node_list.append(node)
        self._nodes = tuple(node_list)

        edge_list: List[RelationEdge] = list()
        seen_edges = set()
        for edge in edges:
            if edge.relation != relation:
                raise GraphError(
                    f"edge {edge!r} does not belong to a {relation.value} graph"
                )
            for endpoint in edge.pair:
                if endpoint not in seen:
                    raise UnknownEventError(
                        f"edge endpoint {endpoint.text!r} is not a graph node"
                    )
            if edge in seen_edges:
                raise DuplicateEdgeError(f"duplicate edge {edge!r}")
            seen_edges.add(edge)
            edge_list.append(edge)
        self._edges = tuple(edge_list)
        self._edge_set = frozenset(edge_list)

        cycle = detect_cycle(self._edges, nodes=self._nodes)
        if cycle is not None:
            raise CycleError(
                "relation graph contains a cycle: "
                + " -> ".join(event.text for event in cycle + cycle[:1]),
                cycle=cycle,
            )

    @property
    def nodes(self):
        return self._nodes

    @property
    def edges(self):
        return self._edges

    def __len__(self):
        return len(self._edges)

    def __contains__(self, edge):
        return edge in self._edge_set

    def __eq__(self, other):
        if not isinstance(other, RelationGraph):
            return NotImplemented
        return (
            self.relation == other.relation
            and set(self._nodes) == set(other._nodes)
            and self._edge_set == other._edge_set
        )

    def __hash__(self):
        return hash((self.relation, frozenset(self._nodes), self._edge_set))

    def __repr__(self):
        return (
            f"RelationGraph({self.relation.value}, nodes={len(self._nodes)}, "
            f"edges={len(self._edges)})"
        )

    def to_networkx(self) -> nx.DiGraph:
        digraph = nx.DiGraph()
        digraph.add_nodes_from(self._nodes)
        digraph.add_edges_from(edge.pair for edge in self._edges)
        return digraph


def empty_graph(relation: RelationType, nodes: Iterable[Event]) -> RelationGraph:
    return RelationGraph(relation, nodes, ())


def transitive_closure(graph: RelationGraph) -> RelationGraph:
    digraph = graph.to_networkx()
    try:
        closure = nx.transitive_closure_dag(digraph)
    except nx.NetworkXUnfeasible as e:
        raise CycleError("cannot close a cyclic graph") from e

    position = {node: index for index, node in enumerate(graph.nodes)}
    pairs = sorted(closure.edges(), key=lambda p: (position[p[0]], position[p[1]]))
    return RelationGraph(
        graph.relation,
        graph.nodes,
        [RelationEdge(head, tail, graph.relation) for head, tail in pairs],
    )


class RejectionReason(Enum):
    DUPLICATE = "duplicate"
    CYCLE = "cycle"


class Rejection(NamedTuple):
    edge: RelationEdge
    reason: RejectionReason


class MergeResult(NamedTuple):
    graph: RelationGraph
    added: List[RelationEdge]
    rejections: List[Rejection]

    @property
    def rejected(self) -> List[RelationEdge]:
        return [rejection.edge for rejection in self.rejections]

    def rejected_for(self, reason: RejectionReason) -> List[RelationEdge]:
        return [r.edge for r in self.rejections if r.reason == reason]


def merge_edges(graph: RelationGraph, new_edges: Iterable[RelationEdge]) -> MergeResult:
    """
    Add edges one at a time, in the given order, keeping the graph acyclic.

    Duplicates and edges that would close a cycle are returned as rejections
    instead of failing the whole merge.
    """
    digraph = graph.to_networkx()
    present = set(graph.edges)
    added: List[RelationEdge] = list()
    rejections: List[Rejection] = list()

    for edge in new_edges:
        if edge.relation != graph.relation:
            raise GraphError(
                f"cannot merge a {edge.relation.value} edge into a "
                f"{graph.relation.value} graph"
            )
        for endpoint in edge.pair:
            if endpoint not in digraph:
                raise UnknownEventError(
                    f"edge endpoint {endpoint.text!r} is not a graph node"
                )
        if edge in present:
            rejections.append(Rejection(edge, RejectionReason.DUPLICATE))
            continue
        # head -> tail closes a cycle iff head is already reachable from tail
        if nx.has_path(digraph, edge.tail, edge.head):
            rejections.append(Rejection(edge, RejectionReason.CYCLE))
            continue
        digraph.add_edge(edge.head, edge.tail)
        present.add(edge)
        added.append(edge)

    merged = RelationGraph(graph.relation, graph.nodes, list(graph.edges) + added)
    return MergeResult(graph=merged, added=added, rejections=rejections)


class EventGraphBundle(object):
    def __init__(
        self,
        document_id: str,
        hierarchical: RelationGraph,
        temporal: RelationGraph,
        causal: RelationGraph,
    ):
        expected = {
            RelationType.HIERARCHICAL: hierarchical,
            RelationType.TEMPORAL: temporal,
            RelationType.CAUSAL: causal,
        }
        for relation, graph in expected.items():
            if graph.relation != relation:
                raise GraphError(
                    f"expected a {relation.value} graph, got {graph.relation.value}"
                )
        node_set = set(hierarchical.nodes)
        if set(temporal.nodes) != node_set or set(causal.nodes) != node_set:
            raise GraphError("the relation graphs of a bundle must share one node set")

        self.document_id = document_id
        self.hierarchical = hierarchical
        self.temporal = temporal
        self.causal = causal

    @classmethod
    def from_graphs(
        cls,
        document_id: str,
        events: Sequence[Event],
        graphs: Optional[Dict[RelationType, RelationGraph]] = None,
    ) -> "EventGraphBundle":
        graphs = graphs or {}
        return cls(
            document_id,
            *[
                graphs.get(relation, empty_graph(relation, events))
                for relation in RELATION_ORDER
            ],
        )

    @property
    def events(self):
        return self.hierarchical.nodes

    def graph(self, relation: RelationType) -> RelationGraph:
        return {
            RelationType.HIERARCHICAL: self.hierarchical,
            RelationType.TEMPORAL: self.temporal,
            RelationType.CAUSAL: self.causal,
        }[relation]

    @property
    def graphs(self) -> Dict[RelationType, RelationGraph]:
        return {relation: self.graph(relation) for relation in RELATION_ORDER}

    def edges(self) -> List[RelationEdge]:
        return [
            edge for relation in RELATION_ORDER for edge in self.graph(relation).edges
        ]

    def __eq__(self, other):
        if not isinstance(other, EventGraphBundle):
            return NotImplemented
        return self.document_id == other.document_id and self.graphs == other.graphs

    def __repr__(self):
        return "EventGraphBundle({!r}, events={}, {})".format(
            self.document_id,
            len(self.events),
            ", ".join(
                f"{relation.short_name}={len(self.graph(relation))}"
                for relation in RELATION_ORDER
            ),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "document_id": self.document_id,
            "events": sorted(event.text for event in self.events),
            "relations": [
                {
                    "head": edge.head.text,
                    "relation": edge.relation.value,
                    "tail": edge.tail.text,
                }
                for edge in sorted(self.edges(), key=RelationEdge.sort_key)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Any) -> "EventGraphBundle":
        if not isinstance(data, dict):
            raise BundleFormatError("a bundle must be a JSON object")
        missing = [
            key for key in ("document_id", "events", "relations") if key not in data
        ]
        if missing:
            raise BundleFormatError(f"bundle is missing keys: {', '.join(missing)}")
        if not isinstance(data["document_id"], str):
            raise BundleFormatError("document_id must be a string")
        if not isinstance(data["events"], list) or not all(
            isinstance(text, str) for text in data["events"]
        ):
            raise BundleFormatError("events must be a list of strings")
        if not isinstance(data["relations"], list):
            raise BundleFormatError("relations must be a list")

        by_key: Dict[str, Event] = dict()
        for text in data["events"]:
            try:
                event = Event(text)
            except GraphError as e:
                raise BundleFormatError(str(e)) from e
            if event.key in by_key:
                raise BundleFormatError(f"duplicate event {event.text!r}")
            by_key[event.key] = event
        events = list(by_key.values())

        edges: Dict[RelationType, List[RelationEdge]] = {r: [] for r in RELATION_ORDER}
        for index, item in enumerate(data["relations"]):
            if not isinstance(item, dict) or not all(
                isinstance(item.get(key), str) for key in ("head", "relation", "tail")
            ):
                raise BundleFormatError(
                    f"relation #{index} needs string head, relation and tail"
                )
            try:
                relation = RelationType.from_name(item["relation"])
            except ValueError as e:
                raise BundleFormatError(str(e)) from e
            try:
                head = by_key[event_key(item["head"])]
                tail = by_key[event_key(item["tail"])]
            except KeyError as e:
                raise BundleFormatError(
                    f"relation #{index} references an unknown event: {e.args[0]!r}"
                ) from e
            try:
                edges[relation].append(RelationEdge(head, tail, relation))
            except SelfLoopError as e:
                raise BundleFormatError(str(e)) from e

        graphs = dict()
        for relation in RELATION_ORDER:
            # CycleError and DuplicateEdgeError carry the details for `validate`
            graphs[relation] = RelationGraph(relation, events, edges[relation])
        return cls.from_graphs(data["document_id"], events, graphs)

    @classmethod
    def from_json(cls, text: str) -> "EventGraphBundle":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise BundleFormatError(f"invalid JSON: {e}") from e
        return cls.from_dict(data)
