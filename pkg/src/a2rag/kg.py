"""Corpus and knowledge-graph storage.

The graph is loaded once and treated as immutable afterwards. Every edge is
directed and labeled, but traversal always works on the augmented view in
which each stored edge also contributes the inverse arc, so neighborhoods
are effectively bidirectional. Nodes and edges carry provenance: the ids of
the corpus chunks they were extracted from. ``map_back`` is the bridge from
graph space back to text space.

Conventions enforced here:

* duplicate ``(source, relation, target)`` triples are collapsed at load
  time and their provenance sets merged;
* multiple edges between the same endpoints with distinct labels are kept;
* self-loops are accepted in the input but excluded from adjacency, degrees,
  and traversal;
* ``degree_cache[u]`` counts the directed arcs leaving ``u`` in the
  augmented view, so each stored non-loop edge adds one to both endpoints.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import CorpusLoadError, GraphLoadError, UnknownNodeError

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    """Orientation of an arc relative to the stored edge."""

    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass(frozen=True)
class Chunk:
    """One retrievable unit of source text."""

    chunk_id: str
    doc_id: str
    text: str


@dataclass(frozen=True)
class DocSummary:
    """Document-level abstract used by the retrieval gate."""

    doc_id: str
    summary_text: str


@dataclass(frozen=True)
class EntityNode:
    node_id: str
    canonical_name: str
    aliases: frozenset[str] = frozenset()
    provenance: frozenset[str] = frozenset()

    def surface_forms(self) -> tuple[str, ...]:
        """Canonical name plus aliases, canonical first, aliases sorted."""
        return (self.canonical_name, *sorted(self.aliases))


@dataclass(frozen=True)
class RelationEdge:
    source: str
    relation: str
    target: str
    provenance: frozenset[str] = frozenset()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.relation, self.target)

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


@dataclass(frozen=True)
class Corpus:
    """Chunk store plus optional per-document summaries."""

    chunks: Mapping[str, Chunk]
    summaries: tuple[DocSummary, ...] = ()

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self.chunks

    def __len__(self) -> int:
        return len(self.chunks)

    def chunk_text(self, chunk_id: str) -> str:
        return self.chunks[chunk_id].text

    def doc_ids(self) -> set[str]:
        return {c.doc_id for c in self.chunks.values()}


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable graph with adjacency and degree caches.

    ``adjacency`` maps a node id to the ascending indexes of its incident
    non-loop edges in ``edges`` (as source or as target). Build instances
    through :meth:`build` or :func:`load_graph`, which maintain the caches.
    """

    nodes: Mapping[str, EntityNode]
    edges: tuple[RelationEdge, ...]
    adjacency: Mapping[str, tuple[int, ...]]
    degree_cache: Mapping[str, int]

    @classmethod
    def build(
        cls,
        nodes: Iterable[EntityNode],
        edges: Iterable[RelationEdge],
    ) -> "KnowledgeGraph":
        """Assemble a graph, collapsing duplicate triples.

        Raises :class:`GraphLoadError` on duplicate node ids or edges whose
        endpoints are not declared. Provenance ids are not checked here;
        ``load_graph`` validates them against the corpus.
        """
        node_map: dict[str, EntityNode] = {}
        for node in nodes:
            if node.node_id in node_map:
                raise GraphLoadError(f"duplicate node id {node.node_id!r}")
            node_map[node.node_id] = node

        deduped: dict[tuple[str, str, str], RelationEdge] = {}
        for edge in edges:
            for endpoint in (edge.source, edge.target):
                if endpoint not in node_map:
                    raise GraphLoadError(
                        f"edge {edge.key!r} references undeclared node {endpoint!r}"
                    )
            seen = deduped.get(edge.key)
            if seen is None:
                deduped[edge.key] = edge
            elif edge.provenance - seen.provenance:
                deduped[edge.key] = RelationEdge(
                    edge.source, edge.relation, edge.target, seen.provenance | edge.provenance
                )
        edge_tuple = tuple(deduped.values())

        adjacency: dict[str, list[int]] = {node_id: [] for node_id in node_map}
        degrees = {node_id: 0 for node_id in node_map}
        for index, edge in enumerate(edge_tuple):
            if edge.is_self_loop:
                continue
            adjacency[edge.source].append(index)
            adjacency[edge.target].append(index)
            degrees[edge.source] += 1
            degrees[edge.target] += 1
        return cls(
            nodes=node_map,
            edges=edge_tuple,
            adjacency={nid: tuple(idx) for nid, idx in adjacency.items()},
            degree_cache=degrees,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            dict(self.nodes) == dict(other.nodes)
            and self.edges == other.edges
            and dict(self.adjacency) == dict(other.adjacency)
            and dict(self.degree_cache) == dict(other.degree_cache)
        )

    def __len__(self) -> int:
        return len(self.nodes)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> EntityNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def node_name(self, node_id: str) -> str:
        return self.node(node_id).canonical_name

    @cached_property
    def relation_labels(self) -> tuple[str, ...]:
        return tuple(sorted({edge.relation for edge in self.edges}))

    @cached_property
    def neighbor_ids(self) -> Mapping[str, tuple[str, ...]]:
        """Distinct augmented neighbors per node, ascending by id.

        Collapses parallel and reciprocal edges to a single neighbor entry;
        this is the view traversal and the random walk operate on.
        """
        out: dict[str, tuple[str, ...]] = {}
        for node_id, incident in self.adjacency.items():
            seen = {
                self.edges[i].target if self.edges[i].source == node_id else self.edges[i].source
                for i in incident
            }
            out[node_id] = tuple(sorted(seen))
        return out

    def augmented_neighbors(self, node_id: str) -> set[tuple[str, str, Direction]]:
        """All arcs leaving ``node_id`` in the augmented view.

        Each element is ``(relation, other_node, direction)`` where the
        direction records whether the stored edge points away from
        (``FORWARD``) or into (``INVERSE``) ``node_id``. The set size equals
        ``degree_cache[node_id]``.
        """
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        arcs: set[tuple[str, str, Direction]] = set()
        for index in self.adjacency[node_id]:
            edge = self.edges[index]
            if edge.source == node_id:
                arcs.add((edge.relation, edge.target, Direction.FORWARD))
            else:
                arcs.add((edge.relation, edge.source, Direction.INVERSE))
        return arcs

    def incident_edges(self, node_id: str) -> Iterator[RelationEdge]:
        """Non-loop edges touching ``node_id``, in load order."""
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        for index in self.adjacency[node_id]:
            yield self.edges[index]

    def edges_between(self, a: str, b: str) -> list[RelationEdge]:
        """Edges connecting ``a`` and ``b`` in either orientation, load order."""
        out = []
        for index in self.adjacency.get(a, ()):
            edge = self.edges[index]
            if edge.source == b or edge.target == b:
                out.append(edge)
        return out

    def map_back(self, node_ids: Iterable[str]) -> list[str]:
        """Union of the nodes' provenance chunk ids, sorted lexicographically.

        Raises :class:`UnknownNodeError` for ids outside the graph. Nodes
        with empty provenance contribute nothing.
        """
        chunk_ids: set[str] = set()
        for node_id in node_ids:
            chunk_ids.update(self.node(node_id).provenance)
        return sorted(chunk_ids)


def _iter_jsonl(path: Path, error: type[Exception]) -> Iterator[tuple[int, dict]]:
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise error(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise error(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise error(f"{path}:{lineno}: expected an object, got {type(record).__name__}")
        yield lineno, record


def _required_str(record: dict, key: str, where: str, error: type[Exception]) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value:
        raise error(f"{where}: field {key!r} must be a non-empty string")
    return value


def load_corpus(path: str | Path) -> Corpus:
    """Load chunks from a JSON-lines file.

    Each record needs ``chunk_id``, ``doc_id``, and a non-empty ``text``.
    Duplicate chunk ids are an error. Summaries are attached separately via
    :func:`load_summaries`.
    """
    path = Path(path)
    chunks: dict[str, Chunk] = {}
    for lineno, record in _iter_jsonl(path, CorpusLoadError):
        where = f"{path}:{lineno}"
        chunk_id = _required_str(record, "chunk_id", where, CorpusLoadError)
        doc_id = _required_str(record, "doc_id", where, CorpusLoadError)
        text = _required_str(record, "text", where, CorpusLoadError)
        unknown = set(record) - {"chunk_id", "doc_id", "text"}
        if unknown:
            raise CorpusLoadError(f"{where}: unknown fields {sorted(unknown)}")
        if chunk_id in chunks:
            raise CorpusLoadError(f"{where}: duplicate chunk_id {chunk_id!r}")
        chunks[chunk_id] = Chunk(chunk_id=chunk_id, doc_id=doc_id, text=text)
    logger.info("loaded corpus %s: %d chunks", path, len(chunks))
    return Corpus(chunks=chunks)


def load_summaries(path: str | Path, corpus: Corpus) -> Corpus:
    """Return a new corpus with summaries from a JSON-lines file attached.

    Every summary must name a doc_id that appears among the corpus chunks,
    and each doc_id may be summarized at most once.
    """
    path = Path(path)
    known_docs = corpus.doc_ids()
    summaries: list[DocSummary] = []
    seen: set[str] = set()
    for lineno, record in _iter_jsonl(path, CorpusLoadError):
        where = f"{path}:{lineno}"
        doc_id = _required_str(record, "doc_id", where, CorpusLoadError)
        summary = _required_str(record, "summary", where, CorpusLoadError)
        unknown = set(record) - {"doc_id", "summary"}
        if unknown:
            raise CorpusLoadError(f"{where}: unknown fields {sorted(unknown)}")
        if doc_id in seen:
            raise CorpusLoadError(f"{where}: duplicate summary for doc {doc_id!r}")
        if doc_id not in known_docs:
            raise CorpusLoadError(f"{where}: summary for unknown doc {doc_id!r}")
        seen.add(doc_id)
        summaries.append(DocSummary(doc_id=doc_id, summary_text=summary))
    logger.info("loaded %d summaries from %s", len(summaries), path)
    return Corpus(chunks=corpus.chunks, summaries=tuple(summaries))


def load_graph(path: str | Path, corpus: Corpus) -> KnowledgeGraph:
    """Load a graph from a JSON-lines file of node and edge records.

    Node records: ``{"type": "node", "node_id", "name", "aliases", "chunks"}``.
    Edge records: ``{"type": "edge", "source", "relation", "target", "chunks"}``.
    Records may appear in any order; endpoints are resolved after the whole
    file is read. All provenance chunk ids must exist in ``corpus``.
    """
    path = Path(path)
    nodes: list[EntityNode] = []
    raw_edges: list[tuple[int, dict]] = []

    def provenance_of(record: dict, where: str) -> frozenset[str]:
        chunk_ids = record.get("chunks", [])
        if not isinstance(chunk_ids, list) or not all(isinstance(c, str) for c in chunk_ids):
            raise GraphLoadError(f"{where}: field 'chunks' must be a list of strings")
        missing = [c for c in chunk_ids if c not in corpus]
        if missing:
            raise GraphLoadError(f"{where}: provenance chunks not in corpus: {missing}")
        return frozenset(chunk_ids)

    for lineno, record in _iter_jsonl(path, GraphLoadError):
        where = f"{path}:{lineno}"
        kind = record.get("type")
        if kind == "node":
            node_id = _required_str(record, "node_id", where, GraphLoadError)
            name = _required_str(record, "name", where, GraphLoadError)
            aliases = record.get("aliases", [])
            if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
                raise GraphLoadError(f"{where}: field 'aliases' must be a list of strings")
            unknown = set(record) - {"type", "node_id", "name", "aliases", "chunks"}
            if unknown:
                raise GraphLoadError(f"{where}: unknown fields {sorted(unknown)}")
            nodes.append(
                EntityNode(
                    node_id=node_id,
                    canonical_name=name,
                    aliases=frozenset(aliases),
                    provenance=provenance_of(record, where),
                )
            )
        elif kind == "edge":
            unknown = set(record) - {"type", "source", "relation", "target", "chunks"}
            if unknown:
                raise GraphLoadError(f"{where}: unknown fields {sorted(unknown)}")
            raw_edges.append((lineno, record))
        else:
            raise GraphLoadError(f"{where}: record type must be 'node' or 'edge', got {kind!r}")

    declared = {node.node_id for node in nodes}
    edges: list[RelationEdge] = []
    for lineno, record in raw_edges:
        where = f"{path}:{lineno}"
        source = _required_str(record, "source", where, GraphLoadError)
        relation = _required_str(record, "relation", where, GraphLoadError)
        target = _required_str(record, "target", where, GraphLoadError)
        for endpoint in (source, target):
            if endpoint not in declared:
                raise GraphLoadError(f"{where}: edge references undeclared node {endpoint!r}")
        edges.append(
            RelationEdge(
                source=source,
                relation=relation,
                target=target,
                provenance=provenance_of(record, where),
            )
        )

    graph = KnowledgeGraph.build(nodes, edges)
    logger.info(
        "loaded graph %s: %d nodes, %d edges (%d in file)",
        path,
        len(graph.nodes),
        len(graph.edges),
        len(edges),
    )
    return graph
