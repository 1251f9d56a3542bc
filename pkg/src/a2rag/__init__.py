"""Graph-grounded retrieval with escalating search and verified answers.

The package is layered bottom-up: :mod:`a2rag.kg` stores the corpus and
knowledge graph, :mod:`a2rag.seeding` aligns query mentions to graph
nodes, :mod:`a2rag.retriever` escalates retrieval from a local
neighborhood through bridge paths to a global random-walk ranking,
:mod:`a2rag.controller` wraps retrieval in a gate/verify/rewrite loop,
and :mod:`a2rag.bench` evaluates the whole stack. :mod:`a2rag.config`
assembles an :class:`~a2rag.controller.Engine` from a JSON config file.
"""

from .bench import (
    QAInstance,
    RunReport,
    StressReport,
    StressSpec,
    dense_chunk_ranking,
    exact_match,
    load_dataset,
    normalize_answer,
    recall_at_k,
    run_benchmark,
    stress_delete,
    stress_sweep,
    token_f1,
)
from .config import AppConfig, OracleSettings, build_engine, build_suite, load_config
from .controller import (
    ControllerBudget,
    Engine,
    FailureType,
    GateConfig,
    IterationRecord,
    Outcome,
    OutcomeStatus,
    gate,
    propose_kb_updates,
    rewrite,
    run,
    triple_check,
)
from .errors import (
    A2RagError,
    ConfigError,
    CorpusLoadError,
    DatasetError,
    DegeneratePersonalizationError,
    GraphLoadError,
    OracleAuthError,
    OracleConfigError,
    OracleError,
    OracleProtocolError,
    OracleTransportError,
    RetrievalStageError,
    StageOrderError,
    UnknownNodeError,
)
from .kg import (
    Chunk,
    Corpus,
    Direction,
    DocSummary,
    EntityNode,
    KnowledgeGraph,
    RelationEdge,
    load_corpus,
    load_graph,
    load_summaries,
)
from .oracles import (
    UNKNOWN_MARKER,
    CostCounters,
    MockEmbedder,
    OracleSuite,
    Sufficiency,
    TokenUsage,
    TripleCandidate,
)
from .retriever import (
    EvidenceBundle,
    EvidenceTriple,
    RetrieverConfig,
    Stage,
    Telemetry,
    bridge_paths,
    find_bridges,
    khop_set,
    ppr_scores,
    retrieve,
)
from .seeding import (
    AlignConfig,
    MentionSet,
    SeedSet,
    align_seeds,
    extract_mentions,
    hybrid_score,
    lexical_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "A2RagError",
    "AlignConfig",
    "AppConfig",
    "Chunk",
    "ConfigError",
    "ControllerBudget",
    "Corpus",
    "CorpusLoadError",
    "CostCounters",
    "DatasetError",
    "DegeneratePersonalizationError",
    "Direction",
    "DocSummary",
    "Engine",
    "EntityNode",
    "EvidenceBundle",
    "EvidenceTriple",
    "FailureType",
    "GateConfig",
    "GraphLoadError",
    "IterationRecord",
    "KnowledgeGraph",
    "MentionSet",
    "MockEmbedder",
    "OracleAuthError",
    "OracleConfigError",
    "OracleError",
    "OracleProtocolError",
    "OracleSettings",
    "OracleSuite",
    "OracleTransportError",
    "Outcome",
    "OutcomeStatus",
    "QAInstance",
    "RelationEdge",
    "RetrievalStageError",
    "RetrieverConfig",
    "RunReport",
    "SeedSet",
    "Stage",
    "StageOrderError",
    "StressReport",
    "StressSpec",
    "Sufficiency",
    "Telemetry",
    "TokenUsage",
    "TripleCandidate",
    "UNKNOWN_MARKER",
    "UnknownNodeError",
    "align_seeds",
    "bridge_paths",
    "build_engine",
    "build_suite",
    "dense_chunk_ranking",
    "exact_match",
    "extract_mentions",
    "find_bridges",
    "gate",
    "hybrid_score",
    "khop_set",
    "load_config",
    "load_corpus",
    "load_dataset",
    "load_graph",
    "load_summaries",
    "lexical_similarity",
    "normalize_answer",
    "ppr_scores",
    "propose_kb_updates",
    "recall_at_k",
    "retrieve",
    "rewrite",
    "run",
    "run_benchmark",
    "stress_delete",
    "stress_sweep",
    "token_f1",
    "triple_check",
]
