"""Escalating graph retrieval: local edges, bridge paths, global walk.

A query is answered from the graph in up to three stages, each run at most
once and only when the sufficiency judge asks for more:

1. *local* — serialize every edge incident to a seed node (optionally
   filtered to the seeded relation labels);
2. *bridge* — find nodes reachable within the hop budget from at least two
   seeds and emit the shortest connecting paths;
3. *global* — run a seed-personalized random walk with restart over the
   augmented graph and map the top-scoring nodes back to their source
   chunks.

Evidence accumulates monotonically across stages. Triples carry their
provenance chunks into the evidence the moment they are admitted, so the
final chunk ranking is stage-ordered: local first, then bridge, then the
mapped-back global chunks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DegeneratePersonalizationError,
    RetrievalStageError,
    OracleError,
    StageOrderError,
)
from .kg import Corpus, KnowledgeGraph, RelationEdge
from .oracles import OracleSuite, Sufficiency
from .seeding import AlignConfig, MentionSet, SeedSet, align_seeds, extract_mentions

logger = logging.getLogger(__name__)


class Stage(str, Enum):
    LOCAL = "local"
    BRIDGE = "bridge"
    GLOBAL = "global"


class Termination(str, Enum):
    """Last stage that executed before retrieval returned."""

    LOCAL = "local"
    BRIDGE = "bridge"
    GLOBAL = "global"
    # Declared for completeness of the domain; the shipped escalation policy
    # always terminates at a concrete stage.
    EXHAUSTED = "exhausted"


class StageCursor(Enum):
    NOT_STARTED = 0
    AFTER_LOCAL = 1
    AFTER_BRIDGE = 2
    AFTER_GLOBAL = 3


@dataclass(frozen=True)
class RetrieverConfig:
    """Budgets and numeric knobs for the three stages.

    ``hop_budget`` is the neighborhood radius used for bridge discovery,
    ``alpha`` the restart probability of the global walk, ``top_l`` how many
    walk nodes map back to chunks, and ``max_triples`` the evidence cap
    (earlier stages keep priority when it binds).
    """

    hop_budget: int = 2
    alpha: float = 0.15
    top_l: int = 10
    ppr_epsilon: float = 1e-8
    ppr_max_iters: int = 200
    max_paths_per_pair: int = 2
    max_triples: int = 64
    ppr_handle_dangling: bool = True

    def __post_init__(self) -> None:
        if self.hop_budget < 2:
            raise ValueError(f"hop_budget must be >= 2, got {self.hop_budget}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.top_l < 1:
            raise ValueError(f"top_l must be positive, got {self.top_l}")
        if self.ppr_epsilon <= 0.0:
            raise ValueError(f"ppr_epsilon must be positive, got {self.ppr_epsilon}")
        if self.ppr_max_iters < 1:
            raise ValueError(f"ppr_max_iters must be positive, got {self.ppr_max_iters}")
        if self.max_paths_per_pair < 1:
            raise ValueError(f"max_paths_per_pair must be positive, got {self.max_paths_per_pair}")
        if self.max_triples < 1:
            raise ValueError(f"max_triples must be positive, got {self.max_triples}")


@dataclass
class Telemetry:
    """Counters for how much graph work a retrieval (or run) performed."""

    stage_local: int = 0
    stage_bridge: int = 0
    stage_global: int = 0
    khop_calls: int = 0
    bfs_expansions: int = 0
    ppr_calls: int = 0
    ppr_iterations: int = 0
    ppr_iteration_sums: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage_local": self.stage_local,
            "stage_bridge": self.stage_bridge,
            "stage_global": self.stage_global,
            "khop_calls": self.khop_calls,
            "bfs_expansions": self.bfs_expansions,
            "ppr_calls": self.ppr_calls,
            "ppr_iterations": self.ppr_iterations,
        }


@dataclass(frozen=True)
class EvidenceTriple:
    source: str
    relation: str
    target: str
    provenance: tuple[str, ...]
    stage: Stage

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.relation, self.target)


@dataclass
class EvidenceBundle:
    """Ordered, deduplicated evidence with per-item stage of origin.

    ``chunk_ids`` is the ranked chunk list: insertion order, which by
    construction is stage order. ``triples`` stop growing at
    ``max_triples``; chunks attached to a dropped triple are dropped with
    it.
    """

    max_triples: int = 64
    triples: list[EvidenceTriple] = field(default_factory=list)
    chunk_ids: list[str] = field(default_factory=list)
    chunk_stage: dict[str, Stage] = field(default_factory=dict)
    terminated_at: Termination | None = None
    sufficient: bool = False
    entity_seed_names: tuple[str, ...] = ()
    _triple_keys: set[tuple[str, str, str]] = field(default_factory=set)

    def add_edge(self, edge: RelationEdge, stage: Stage) -> bool:
        """Admit an edge as evidence. Returns False on duplicate or cap."""
        key = (edge.source, edge.relation, edge.target)
        if key in self._triple_keys:
            return False
        if len(self.triples) >= self.max_triples:
            return False
        self._triple_keys.add(key)
        self.triples.append(
            EvidenceTriple(
                source=edge.source,
                relation=edge.relation,
                target=edge.target,
                provenance=tuple(sorted(edge.provenance)),
                stage=stage,
            )
        )
        for chunk_id in sorted(edge.provenance):
            self.add_chunk(chunk_id, stage)
        return True

    def add_chunk(self, chunk_id: str, stage: Stage) -> bool:
        if chunk_id in self.chunk_stage:
            return False
        self.chunk_stage[chunk_id] = stage
        self.chunk_ids.append(chunk_id)
        return True

    def evidence_texts(self, graph: KnowledgeGraph, corpus: Corpus) -> list[str]:
        """Triples rendered with canonical names, then chunk texts, ranked."""
        texts = []
        for triple in self.triples:
            source = graph.node_name(triple.source) if graph.has_node(triple.source) else triple.source
            target = graph.node_name(triple.target) if graph.has_node(triple.target) else triple.target
            texts.append(f"{source} {triple.relation} {target}")
        for chunk_id in self.chunk_ids:
            if chunk_id in corpus:
                texts.append(corpus.chunk_text(chunk_id))
        return texts

    def to_dict(self) -> dict:
        return {
            "triples": [
                {
                    "source": t.source,
                    "relation": t.relation,
                    "target": t.target,
                    "provenance": list(t.provenance),
                    "stage": t.stage.value,
                }
                for t in self.triples
            ],
            "chunks": [
                {"chunk_id": c, "stage": self.chunk_stage[c].value} for c in self.chunk_ids
            ],
            "terminated_at": self.terminated_at.value if self.terminated_at else None,
            "sufficient": self.sufficient,
            "entity_seed_names": list(self.entity_seed_names),
        }


@dataclass
class RetrieverState:
    """Mutable state threaded through the stage functions."""

    query: str
    seeds: SeedSet
    evidence: EvidenceBundle
    cursor: StageCursor = StageCursor.NOT_STARTED


# --------------------------------------------------------------------------
# Graph traversal primitives
# --------------------------------------------------------------------------


def khop_set(
    graph: KnowledgeGraph, node_id: str, k: int, telemetry: Telemetry | None = None
) -> set[str]:
    """Nodes within ``k`` hops of ``node_id`` in the augmented view.

    Includes the start node itself. Neighbors expand in ascending id order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    graph.node(node_id)  # raises UnknownNodeError
    if telemetry is not None:
        telemetry.khop_calls += 1
    visited = {node_id}
    frontier = [node_id]
    neighbor_ids = graph.neighbor_ids
    for _ in range(k):
        if not frontier:
            break
        next_frontier: list[str] = []
        for current in frontier:
            if telemetry is not None:
                telemetry.bfs_expansions += 1
            for neighbor in neighbor_ids[current]:
                if neighbor not in visited:
                    visited.add(neighbor)
                    next_frontier.append(neighbor)
        frontier = next_frontier
    return visited


def find_bridges(
    graph: KnowledgeGraph,
    seeds: list[str] | tuple[str, ...],
    k: int,
    telemetry: Telemetry | None = None,
) -> set[str]:
    """Non-seed nodes within ``k`` hops of at least two distinct seeds."""
    distinct = list(dict.fromkeys(seeds))
    if len(distinct) < 2:
        raise ValueError("bridge discovery needs at least two distinct seeds")
    counts: dict[str, int] = {}
    for seed in distinct:
        for member in khop_set(graph, seed, k, telemetry):
            counts[member] = counts.get(member, 0) + 1
    seed_set = set(distinct)
    return {node for node, count in counts.items() if count >= 2 and node not in seed_set}


def _bfs_distances(
    graph: KnowledgeGraph, start: str, limit: int, telemetry: Telemetry | None = None
) -> dict[str, int]:
    distances = {start: 0}
    frontier = [start]
    depth = 0
    neighbor_ids = graph.neighbor_ids
    while frontier and depth < limit:
        depth += 1
        next_frontier: list[str] = []
        for current in frontier:
            if telemetry is not None:
                telemetry.bfs_expansions += 1
            for neighbor in neighbor_ids[current]:
                if neighbor not in distances:
                    distances[neighbor] = depth
                    next_frontier.append(neighbor)
        frontier = next_frontier
    return distances


def bridge_paths(
    graph: KnowledgeGraph,
    bridge: str,
    seeds: list[str] | tuple[str, ...],
    cfg: RetrieverConfig,
    telemetry: Telemetry | None = None,
) -> list[RelationEdge]:
    """Edges on shortest paths from ``bridge`` to each nearby seed.

    For every seed within the hop budget, up to ``max_paths_per_pair``
    shortest paths are taken, preferring the lexicographically smallest
    node-id sequence. The union of their edges is returned in first-use
    order, deduplicated.
    """
    graph.node(bridge)
    from_bridge = _bfs_distances(graph, bridge, cfg.hop_budget, telemetry)
    ordered_edges: list[RelationEdge] = []
    seen_keys: set[tuple[str, str, str]] = set()
    neighbor_ids = graph.neighbor_ids

    for seed in dict.fromkeys(seeds):
        if seed == bridge:
            continue
        distance = from_bridge.get(seed)
        if distance is None or distance > cfg.hop_budget:
            continue
        from_seed = _bfs_distances(graph, seed, distance, telemetry)

        # Walk the shortest-path lattice from bridge to seed, expanding
        # neighbors in ascending id order so paths come out already sorted
        # by node-id sequence; stop after max_paths_per_pair.
        paths: list[list[str]] = []
        stack = [[bridge]]
        while stack and len(paths) < cfg.max_paths_per_pair:
            path = stack.pop()
            current = path[-1]
            position = len(path) - 1
            if current == seed:
                paths.append(path)
                continue
            candidates = [
                n
                for n in neighbor_ids[current]
                if from_bridge.get(n) == position + 1
                and from_seed.get(n) == distance - position - 1
            ]
            # LIFO stack: push in reverse so smaller ids are explored first.
            for neighbor in reversed(candidates):
                stack.append(path + [neighbor])

        for path in paths:
            for a, b in zip(path, path[1:]):
                for edge in graph.edges_between(a, b):
                    if edge.key not in seen_keys:
                        seen_keys.add(edge.key)
                        ordered_edges.append(edge)
    return ordered_edges


# --------------------------------------------------------------------------
# Personalized random walk
# --------------------------------------------------------------------------


def ppr_scores(
    graph: KnowledgeGraph,
    seeds: list[str] | tuple[str, ...],
    cfg: RetrieverConfig,
    telemetry: Telemetry | None = None,
) -> dict[str, float]:
    """Random walk with restart personalized on the seed nodes.

    The walk runs on the binary augmented adjacency: parallel and
    reciprocal edges collapse to a single arc per ordered pair, and each
    node's out-degree is its count of distinct augmented neighbors. The
    restart vector weights each positive-degree seed by inverse degree; if
    every seed is isolated the restart mass falls back to uniform over the
    seeds (only possible while dangling handling is on). Mass sitting on
    zero-degree nodes is redistributed through the restart vector each
    step, so the scores always sum to one.

    Power iteration starts from the restart vector and stops when the max
    elementwise step falls below ``ppr_epsilon`` or after
    ``ppr_max_iters`` iterations.
    """
    distinct_seeds = list(dict.fromkeys(seeds))
    if not distinct_seeds:
        raise ValueError("ppr_scores needs at least one seed")
    for seed in distinct_seeds:
        graph.node(seed)

    node_ids = sorted(graph.nodes)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)

    neighbor_ids = graph.neighbor_ids
    degrees = np.array([len(neighbor_ids[node_id]) for node_id in node_ids], dtype=np.float64)

    sources: list[int] = []
    targets: list[int] = []
    for node_id in node_ids:
        u = index[node_id]
        for neighbor in neighbor_ids[node_id]:
            sources.append(u)
            targets.append(index[neighbor])
    src = np.array(sources, dtype=np.int64)
    dst = np.array(targets, dtype=np.int64)

    p0 = np.zeros(n, dtype=np.float64)
    weighted = [(index[s], degrees[index[s]]) for s in distinct_seeds if degrees[index[s]] > 0]
    if weighted:
        for i, degree in weighted:
            p0[i] = 1.0 / degree
        p0 /= p0.sum()
    elif cfg.ppr_handle_dangling:
        for seed in distinct_seeds:
            p0[index[seed]] = 1.0 / len(distinct_seeds)
    else:
        raise DegeneratePersonalizationError(
            "every seed is isolated and dangling handling is disabled"
        )

    if telemetry is not None:
        telemetry.ppr_calls += 1

    alpha = cfg.alpha
    dangling = degrees == 0.0
    inv_degrees = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, degrees))

    r = p0.copy()
    for _ in range(cfg.ppr_max_iters):
        spread = r * inv_degrees
        flow = np.zeros(n, dtype=np.float64)
        if len(src):
            np.add.at(flow, dst, spread[src])
        if cfg.ppr_handle_dangling:
            lost = float(r[dangling].sum())
            if lost > 0.0:
                flow = flow + lost * p0
        r_next = alpha * p0 + (1.0 - alpha) * flow
        if telemetry is not None:
            telemetry.ppr_iterations += 1
            telemetry.ppr_iteration_sums.append(float(r_next.sum()))
        step = float(np.max(np.abs(r_next - r)))
        r = r_next
        if step < cfg.ppr_epsilon:
            break
    return {node_id: float(r[index[node_id]]) for node_id in node_ids}


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------


def _require_cursor(state: RetrieverState, expected: tuple[StageCursor, ...], stage: str) -> None:
    if state.cursor not in expected:
        raise StageOrderError(
            f"stage {stage} requires cursor in {[c.name for c in expected]}, "
            f"found {state.cursor.name}"
        )


def stage1_local(
    state: RetrieverState, graph: KnowledgeGraph, telemetry: Telemetry | None = None
) -> list[EvidenceTriple]:
    """Serialize edges incident to the entity seeds, both directions.

    When relation seeds are present, only edges whose label is seeded pass
    the filter. Returns the newly admitted triples; empty seeds yield an
    empty delta.
    """
    _require_cursor(state, (StageCursor.NOT_STARTED,), "local")
    if telemetry is not None:
        telemetry.stage_local += 1
    relation_filter = set(state.seeds.relation_labels)
    before = len(state.evidence.triples)
    for node_id in state.seeds.entity_ids:
        for edge in graph.incident_edges(node_id):
            if relation_filter and edge.relation not in relation_filter:
                continue
            state.evidence.add_edge(edge, Stage.LOCAL)
    state.cursor = StageCursor.AFTER_LOCAL
    return state.evidence.triples[before:]


def stage2_bridge(
    state: RetrieverState,
    graph: KnowledgeGraph,
    cfg: RetrieverConfig,
    telemetry: Telemetry | None = None,
) -> list[EvidenceTriple]:
    """Connect seed neighborhoods through bridge nodes.

    Requires at least two entity seeds; the caller skips this stage
    otherwise. Bridges are processed in ascending id order.
    """
    _require_cursor(state, (StageCursor.AFTER_LOCAL,), "bridge")
    if telemetry is not None:
        telemetry.stage_bridge += 1
    before = len(state.evidence.triples)
    seeds = state.seeds.entity_ids
    bridges = find_bridges(graph, list(seeds), cfg.hop_budget, telemetry)
    for bridge in sorted(bridges):
        for edge in bridge_paths(graph, bridge, list(seeds), cfg, telemetry):
            state.evidence.add_edge(edge, Stage.BRIDGE)
    state.cursor = StageCursor.AFTER_BRIDGE
    return state.evidence.triples[before:]


def stage3_global(
    state: RetrieverState,
    graph: KnowledgeGraph,
    cfg: RetrieverConfig,
    telemetry: Telemetry | None = None,
    map_back: bool = True,
) -> list[str]:
    """Global walk and provenance map-back.

    Ranks nodes by personalized walk score (ties broken by id), keeps the
    ``top_l`` with positive score, and admits their provenance chunks as
    global-stage evidence. With no seeds, or with ``map_back`` disabled,
    the stage is a no-op that still advances the cursor.
    """
    _require_cursor(state, (StageCursor.AFTER_LOCAL, StageCursor.AFTER_BRIDGE), "global")
    if telemetry is not None:
        telemetry.stage_global += 1
    added: list[str] = []
    seeds = state.seeds.entity_ids
    if seeds and map_back:
        scores = ppr_scores(graph, list(seeds), cfg, telemetry)
        positive = [(node_id, s) for node_id, s in scores.items() if s > 0.0]
        positive.sort(key=lambda item: (-item[1], item[0]))
        top_nodes = [node_id for node_id, _ in positive[: cfg.top_l]]
        for chunk_id in graph.map_back(top_nodes):
            if state.evidence.add_chunk(chunk_id, Stage.GLOBAL):
                added.append(chunk_id)
    state.cursor = StageCursor.AFTER_GLOBAL
    return added


# --------------------------------------------------------------------------
# Escalation driver
# --------------------------------------------------------------------------


def retrieve(
    query: str,
    graph: KnowledgeGraph,
    corpus: Corpus,
    suite: OracleSuite,
    cfg: RetrieverConfig,
    align_cfg: AlignConfig,
    *,
    telemetry: Telemetry | None = None,
    relation_seeding: bool = True,
    map_back: bool = True,
) -> EvidenceBundle:
    """Run the escalation for one query and return the evidence bundle.

    The judge is consulted after every executed stage; the bridge stage is
    skipped when fewer than two entity seeds aligned. ``relation_seeding``
    off drops relation seeds after alignment (the node-only ablation);
    ``map_back`` off suppresses global-stage chunks (the graph-only
    baseline). Oracle failures are re-raised with the running stage named.
    """
    try:
        mentions = extract_mentions(query, suite.extractor)
        seeds = align_seeds(mentions, graph, suite.embedder, align_cfg)
    except OracleError as exc:
        raise RetrievalStageError("seeding", exc) from exc
    if not relation_seeding:
        seeds = SeedSet(entity_seeds=seeds.entity_seeds, relation_seeds=())

    bundle = EvidenceBundle(
        max_triples=cfg.max_triples,
        entity_seed_names=tuple(
            graph.node_name(node_id) for node_id in seeds.entity_ids
        ),
    )
    state = RetrieverState(query=query, seeds=seeds, evidence=bundle)

    def judged_sufficient(stage: Stage) -> bool:
        try:
            verdict, _ = suite.judge.judge(
                query, bundle.evidence_texts(graph, corpus), stage.value
            )
        except OracleError as exc:
            raise RetrievalStageError(stage.value, exc) from exc
        return verdict is Sufficiency.SUFFICIENT

    stage1_local(state, graph, telemetry)
    bundle.terminated_at = Termination.LOCAL
    if judged_sufficient(Stage.LOCAL):
        bundle.sufficient = True
        return bundle

    if len(seeds.entity_ids) >= 2:
        stage2_bridge(state, graph, cfg, telemetry)
        bundle.terminated_at = Termination.BRIDGE
        if judged_sufficient(Stage.BRIDGE):
            bundle.sufficient = True
            return bundle
    else:
        logger.debug("bridge stage skipped: %d entity seed(s)", len(seeds.entity_ids))

    stage3_global(state, graph, cfg, telemetry, map_back=map_back)
    bundle.terminated_at = Termination.GLOBAL
    bundle.sufficient = judged_sufficient(Stage.GLOBAL)
    return bundle
