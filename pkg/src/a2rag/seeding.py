"""Mention extraction and seed alignment.

Queries are linked to the graph in two steps: an extractor oracle proposes
entity and relation mentions, then each mention is matched against graph
nodes (or relation labels) with a hybrid of lexical edit similarity and
embedding cosine. Mentions that clear ``tau_align`` become seeds for the
retrieval stages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import textutil
from .errors import ConfigError
from .kg import EntityNode, KnowledgeGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignConfig:
    """Knobs for hybrid mention-to-graph matching.

    ``lambda_lex`` weights lexical similarity against embedding cosine,
    ``tau_align`` is the acceptance threshold, and ``max_seeds`` caps the
    total number of seeds (entities and relations combined) kept per query.
    """

    lambda_lex: float = 0.5
    tau_align: float = 0.8
    max_seeds: int = 8

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_lex <= 1.0:
            raise ConfigError(f"lambda_lex must be in [0, 1], got {self.lambda_lex}")
        if not 0.0 < self.tau_align <= 1.0:
            raise ConfigError(f"tau_align must be in (0, 1], got {self.tau_align}")
        if self.max_seeds < 1:
            raise ConfigError(f"max_seeds must be positive, got {self.max_seeds}")


@dataclass(frozen=True)
class MentionSet:
    """Normalized mentions: whitespace squashed, case-insensitive dedup."""

    entity_mentions: tuple[str, ...]
    relation_mentions: tuple[str, ...]


@dataclass(frozen=True)
class SeedSet:
    """Aligned seeds, each list sorted by descending score then by id."""

    entity_seeds: tuple[tuple[str, float], ...] = ()
    relation_seeds: tuple[tuple[str, float], ...] = ()

    @property
    def entity_ids(self) -> tuple[str, ...]:
        return tuple(node_id for node_id, _ in self.entity_seeds)

    @property
    def relation_labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.relation_seeds)

    def __len__(self) -> int:
        return len(self.entity_seeds) + len(self.relation_seeds)


def lexical_similarity(a: str, b: str) -> float:
    """Normalized edit similarity on casefolded strings.

    ``1 - distance / max(len)``; two empty strings count as identical.
    """
    a = a.casefold()
    b = b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - textutil.levenshtein(a, b) / longest


def _dedup_normalized(raw: list[str]) -> tuple[str, ...]:
    seen: set[str] = set()
    out: list[str] = []
    for mention in raw:
        squashed = textutil.squash_ws(mention)
        if not squashed:
            continue
        key = squashed.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(squashed)
    return tuple(out)


def extract_mentions(query: str, extractor) -> MentionSet:
    """Run the mention extractor and normalize its output.

    Whitespace runs are squashed, empty strings dropped, and duplicates
    removed case-insensitively keeping the first occurrence.
    """
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    (entities, relations), _ = extractor.extract(query)
    return MentionSet(
        entity_mentions=_dedup_normalized(list(entities)),
        relation_mentions=_dedup_normalized(list(relations)),
    )


def _clipped_cosine(u: np.ndarray, v: np.ndarray) -> float:
    # Embeddings arrive unit-norm, so the dot product is the cosine.
    return float(min(1.0, max(0.0, float(np.dot(u, v)))))


def hybrid_score(mention: str, node: EntityNode, embedder, cfg: AlignConfig) -> float:
    """Blend of best lexical match over surface forms and embedding cosine.

    The lexical part takes the maximum similarity over the canonical name
    and all aliases; the semantic part compares the mention embedding to the
    canonical-name embedding, with negative cosine clipped to zero.
    """
    lex = max(lexical_similarity(mention, form) for form in node.surface_forms())
    mention_vec, _ = embedder.embed(mention)
    name_vec, _ = embedder.embed(node.canonical_name)
    sem = _clipped_cosine(mention_vec, name_vec)
    return cfg.lambda_lex * lex + (1.0 - cfg.lambda_lex) * sem


def _normalize_label(label: str) -> str:
    return textutil.squash_ws(label.replace("_", " ").casefold())


def _relation_score(mention: str, label: str, embedder, cfg: AlignConfig) -> float:
    # Labels are matched with underscores read as spaces so that surface
    # phrases like "founded by" line up with labels like "founded_by".
    lex = lexical_similarity(_normalize_label(mention), _normalize_label(label))
    mention_vec, _ = embedder.embed(mention)
    label_vec, _ = embedder.embed(label)
    sem = _clipped_cosine(mention_vec, label_vec)
    return cfg.lambda_lex * lex + (1.0 - cfg.lambda_lex) * sem


def align_seeds(
    mentions: MentionSet,
    graph: KnowledgeGraph,
    embedder,
    cfg: AlignConfig,
) -> SeedSet:
    """Match mentions to graph nodes and relation labels.

    Each mention keeps its single best-scoring candidate when the score
    clears ``tau_align``; ties prefer the smaller id. Mentions that land on
    the same node (or label) are merged keeping the maximum score. The
    combined result is capped at ``max_seeds`` by score, entities winning
    ties against relations.
    """
    entity_best: dict[str, float] = {}
    for mention in mentions.entity_mentions:
        best_id: str | None = None
        best_score = 0.0
        # Candidates are visited in ascending id order, so on score ties the
        # smaller id is the one already held.
        for node_id in sorted(graph.nodes):
            score = hybrid_score(mention, graph.nodes[node_id], embedder, cfg)
            if score > best_score:
                best_id = node_id
                best_score = score
        if best_id is not None and best_score >= cfg.tau_align:
            entity_best[best_id] = max(entity_best.get(best_id, 0.0), best_score)

    relation_best: dict[str, float] = {}
    labels = graph.relation_labels
    for mention in mentions.relation_mentions:
        best_label: str | None = None
        best_score = 0.0
        for label in labels:
            score = _relation_score(mention, label, embedder, cfg)
            if score > best_score:
                best_label = label
                best_score = score
        if best_label is not None and best_score >= cfg.tau_align:
            relation_best[best_label] = max(relation_best.get(best_label, 0.0), best_score)

    # Joint cap: rank all candidates by score, entities before relations on
    # ties, then by id, and keep the top max_seeds.
    ranked = [(-score, 0, key) for key, score in entity_best.items()]
    ranked += [(-score, 1, key) for key, score in relation_best.items()]
    ranked.sort()
    kept = set(ranked[: cfg.max_seeds])

    entity_seeds = tuple(
        (key, -neg) for neg, kind, key in ranked if kind == 0 and (neg, kind, key) in kept
    )
    relation_seeds = tuple(
        (key, -neg) for neg, kind, key in ranked if kind == 1 and (neg, kind, key) in kept
    )
    if len(ranked) > cfg.max_seeds:
        logger.debug(
            "seed cap hit: kept %d of %d candidates", cfg.max_seeds, len(ranked)
        )
    return SeedSet(entity_seeds=entity_seeds, relation_seeds=relation_seeds)
