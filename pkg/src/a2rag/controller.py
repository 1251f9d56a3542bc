"""Answer-level control loop: gate, generate, verify, rewrite, retry.

A query first passes a retrieval gate that compares its embedding against
the document summaries; below-threshold queries abstain without touching
the graph. Gated-in queries enter a bounded loop: retrieve evidence,
generate an answer, and verify it with three independent validators
(evidence relevance, answer grounding, question resolution) combined
conjunctively. On failure the first violated validator names the failure
type, the query is rewritten accordingly, and retrieval restarts from
scratch. After ``i_max`` rewrites the run returns a failure outcome rather
than an unverified answer.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, OracleError, OracleProtocolError
from .kg import Corpus, KnowledgeGraph
from .oracles import CostCounters, OracleSuite, TripleCandidate
from .retriever import EvidenceBundle, RetrieverConfig, Telemetry, retrieve
from .seeding import AlignConfig

logger = logging.getLogger(__name__)


class FailureType(str, Enum):
    REL = "rel"
    GRD = "grd"
    ANS = "ans"


class OutcomeStatus(str, Enum):
    ANSWERED = "answered"
    ABSTAIN = "abstain"
    FAIL = "fail"


@dataclass(frozen=True)
class GateConfig:
    """Similarity threshold for the retrieval gate."""

    tau_g: float = 0.35

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_g <= 1.0:
            raise ConfigError(f"tau_g must be in [0, 1], got {self.tau_g}")


@dataclass(frozen=True)
class ControllerBudget:
    """Retry budget: up to ``i_max`` rewrites, so ``i_max + 1`` attempts."""

    i_max: int = 2

    def __post_init__(self) -> None:
        if self.i_max < 0:
            raise ConfigError(f"i_max must be >= 0, got {self.i_max}")


@dataclass(frozen=True)
class IterationRecord:
    """One verification attempt, as it went into the trace."""

    index: int
    query: str
    answer: str | None
    validator_bits: tuple[bool | None, bool | None, bool | None]
    failure_type: FailureType | None
    triple_count: int
    chunk_count: int
    terminated_at: str | None
    sufficient: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "query": self.query,
            "answer": self.answer,
            "validator_bits": {
                "rel": self.validator_bits[0],
                "grd": self.validator_bits[1],
                "ans": self.validator_bits[2],
            },
            "failure_type": self.failure_type.value if self.failure_type else None,
            "triple_count": self.triple_count,
            "chunk_count": self.chunk_count,
            "terminated_at": self.terminated_at,
            "sufficient": self.sufficient,
        }


@dataclass
class Outcome:
    """Result of one controlled run over a single query.

    ``evidence`` is the ranked chunk list of the final retrieval (stage
    order, then insertion order), present for answered and failed runs that
    got past the gate. ``unverified_answer`` is only populated when the
    no-retrieval fallback is enabled and the gate declined the query.
    """

    status: OutcomeStatus
    answer: str | None = None
    evidence: list[str] = field(default_factory=list)
    trace: list[IterationRecord] = field(default_factory=list)
    cost: CostCounters = field(default_factory=CostCounters)
    telemetry: Telemetry = field(default_factory=Telemetry)
    unverified_answer: str | None = None
    error: str | None = None

    @property
    def final_stage(self) -> str | None:
        if not self.trace:
            return None
        return self.trace[-1].terminated_at

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "status": self.status.value,
            "answer": self.answer,
            "evidence": list(self.evidence),
            "trace": [record.to_dict() for record in self.trace],
            "cost": self.cost.to_dict(include_timing=include_timing),
            "telemetry": self.telemetry.to_dict(),
            "unverified_answer": self.unverified_answer,
            "error": self.error,
        }


def gate(query: str, corpus: Corpus, embedder, cfg: GateConfig) -> bool:
    """True when the best summary similarity reaches ``tau_g``.

    Cosines are clipped to [0, 1] before thresholding. With no summaries
    at all the gate declines: there is nothing to ground retrieval in.
    """
    if not corpus.summaries:
        return False
    query_vec, _ = embedder.embed(query)
    best = 0.0
    for summary in corpus.summaries:
        summary_vec, _ = embedder.embed(summary.summary_text)
        cosine = float(np.dot(query_vec, summary_vec))
        best = max(best, min(1.0, max(0.0, cosine)))
    return best >= cfg.tau_g


def triple_check(
    query: str,
    answer: str,
    evidence_texts: Sequence[str],
    suite: OracleSuite,
) -> tuple[bool, FailureType | None, tuple[bool | None, bool | None, bool | None]]:
    """Conjunction of the three validators, short-circuiting in order.

    Returns ``(passed, failure_type, bits)`` where the failure type names
    the first violated validator and unevaluated bits are ``None``.
    """
    rel, _ = suite.validator_rel.validate(query, answer, evidence_texts)
    if not rel:
        return False, FailureType.REL, (False, None, None)
    grd, _ = suite.validator_grd.validate(query, answer, evidence_texts)
    if not grd:
        return False, FailureType.GRD, (True, False, None)
    ans, _ = suite.validator_ans.validate(query, answer, evidence_texts)
    if not ans:
        return False, FailureType.ANS, (True, True, False)
    return True, None, (True, True, True)


def rewrite(
    query: str,
    answer: str,
    evidence_texts: Sequence[str],
    failure: FailureType,
    rewriter,
    entity_names: Sequence[str] = (),
) -> str:
    """Ask the rewriter for a failure-typed reformulation.

    An empty rewrite is a protocol violation: the loop cannot make progress
    with it, so it surfaces as an oracle error.
    """
    rewritten, _ = rewriter.rewrite(query, answer, evidence_texts, failure.value, entity_names)
    if not rewritten or not rewritten.strip():
        raise OracleProtocolError("rewriter returned an empty query")
    return rewritten


def run(
    query: str,
    graph: KnowledgeGraph,
    corpus: Corpus,
    suite: OracleSuite,
    gate_cfg: GateConfig,
    budget: ControllerBudget,
    retriever_cfg: RetrieverConfig,
    align_cfg: AlignConfig,
    *,
    non_retrieval_fallback: bool = False,
    ablate_relation_seeds: bool = False,
    map_back: bool = True,
) -> Outcome:
    """Run the full control loop for one query.

    Only the original query is gated; rewrites re-enter retrieval directly.
    Each iteration retrieves from scratch (no evidence carry-over), and the
    loop body executes at most ``i_max + 1`` times with at most ``i_max``
    rewrites. Oracle failures turn into a failure outcome with the error
    attached; they never raise past this function.
    """
    counters = CostCounters()
    telemetry = Telemetry()
    metered = suite.metered(counters)
    outcome = Outcome(status=OutcomeStatus.FAIL, cost=counters, telemetry=telemetry)
    started = time.perf_counter()
    try:
        if not gate(query, corpus, metered.embedder, gate_cfg):
            outcome.status = OutcomeStatus.ABSTAIN
            if non_retrieval_fallback:
                answer, _ = metered.generator.generate(query, [])
                outcome.unverified_answer = answer
                logger.info("gate declined %r; fallback answer produced unverified", query)
            return outcome

        current = query
        for index in range(budget.i_max + 1):
            bundle: EvidenceBundle = retrieve(
                current,
                graph,
                corpus,
                metered,
                retriever_cfg,
                align_cfg,
                telemetry=telemetry,
                relation_seeding=not ablate_relation_seeds,
                map_back=map_back,
            )
            texts = bundle.evidence_texts(graph, corpus)
            answer, _ = metered.generator.generate(current, texts)
            passed, failure, bits = triple_check(current, answer, texts, metered)
            outcome.trace.append(
                IterationRecord(
                    index=index,
                    query=current,
                    answer=answer,
                    validator_bits=bits,
                    failure_type=failure,
                    triple_count=len(bundle.triples),
                    chunk_count=len(bundle.chunk_ids),
                    terminated_at=bundle.terminated_at.value if bundle.terminated_at else None,
                    sufficient=bundle.sufficient,
                )
            )
            if passed:
                outcome.status = OutcomeStatus.ANSWERED
                outcome.answer = answer
                outcome.evidence = list(bundle.chunk_ids)
                return outcome
            outcome.evidence = list(bundle.chunk_ids)
            if index < budget.i_max:
                current = rewrite(
                    current,
                    answer,
                    texts,
                    failure,
                    metered.rewriter,
                    entity_names=bundle.entity_seed_names,
                )
        logger.info("retry budget exhausted for %r after %d attempts", query, budget.i_max + 1)
        return outcome
    except OracleError as exc:
        outcome.status = OutcomeStatus.FAIL
        outcome.error = str(exc)
        logger.warning("run failed on oracle error: %s", exc)
        return outcome
    finally:
        counters.wall_time_s = time.perf_counter() - started


@dataclass(frozen=True)
class Engine:
    """A graph, a corpus, an oracle suite, and their tuning, ready to answer.

    Immutable so variants (a degraded graph, a different budget) are cheap
    ``dataclasses.replace`` copies sharing everything else.
    """

    graph: KnowledgeGraph
    corpus: Corpus
    suite: OracleSuite
    gate_cfg: GateConfig = GateConfig()
    budget: ControllerBudget = ControllerBudget()
    retriever_cfg: RetrieverConfig = RetrieverConfig()
    align_cfg: AlignConfig = AlignConfig()
    non_retrieval_fallback: bool = False

    def answer(
        self,
        query: str,
        *,
        ablate_relation_seeds: bool = False,
        map_back: bool = True,
    ) -> Outcome:
        return run(
            query,
            self.graph,
            self.corpus,
            self.suite,
            self.gate_cfg,
            self.budget,
            self.retriever_cfg,
            self.align_cfg,
            non_retrieval_fallback=self.non_retrieval_fallback,
            ablate_relation_seeds=ablate_relation_seeds,
            map_back=map_back,
        )

    def with_graph(self, graph: KnowledgeGraph) -> "Engine":
        return dataclasses.replace(self, graph=graph)


def propose_kb_updates(
    evidence_chunk_ids: Sequence[str],
    corpus: Corpus,
    triple_extractor,
    telemetry: Telemetry | None = None,
) -> list[TripleCandidate]:
    """Extract candidate triples from verified evidence chunks.

    Meant to be called after an answered outcome, with that outcome's
    evidence. Candidates citing chunks outside the given evidence are
    discarded at construction. Extractor failures degrade to an empty
    proposal list with a warning; the answer path is never blocked by the
    update path.
    """
    chunk_ids = [c for c in dict.fromkeys(evidence_chunk_ids) if c in corpus]
    pairs = [(chunk_id, corpus.chunk_text(chunk_id)) for chunk_id in chunk_ids]
    if not pairs:
        return []
    try:
        candidates, _ = triple_extractor.extract_triples(pairs)
    except OracleError as exc:
        logger.warning("triple extraction failed; proposing nothing: %s", exc)
        return []
    allowed = set(chunk_ids)
    kept = []
    for candidate in candidates:
        if candidate.source_chunk_id in allowed:
            kept.append(candidate)
        else:
            logger.warning(
                "dropping proposal %s: source chunk %r not in evidence",
                (candidate.subject, candidate.relation, candidate.object),
                candidate.source_chunk_id,
            )
    return kept
