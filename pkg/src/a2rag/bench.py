"""Evaluation harness: QA datasets, answer metrics, benchmark and stress runs.

Answer quality uses the usual normalized exact-match and token-level F1;
retrieval quality uses recall@k over gold chunk ids. A benchmark run
produces a JSON-stable report (sorted keys, fixed record order) so two
runs with deterministic oracles compare byte for byte; wall-clock fields
are withheld in that mode. The stress harness deletes a growing fraction
of graph nodes and re-evaluates several retrieval strategies on the
degraded graph while the corpus stays intact.
"""

from __future__ import annotations

import json
import logging
import math
import re
import string
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .controller import Engine, Outcome, OutcomeStatus, triple_check
from .errors import DatasetError
from .kg import Corpus, KnowledgeGraph, _iter_jsonl
from .oracles import CostCounters, OracleSuite

logger = logging.getLogger(__name__)

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

STRATEGIES = ("a2rag", "graph_only", "text_only")


@dataclass(frozen=True)
class QAInstance:
    """One evaluation question with its gold answers and gold chunks."""

    qid: str
    question: str
    answers: tuple[str, ...]
    gold_chunks: tuple[str, ...] = ()


def load_dataset(path: str | Path, corpus: Corpus) -> list[QAInstance]:
    """Load QA instances from JSONL, validating gold chunks against the corpus."""
    allowed = {"qid", "question", "answers", "gold_chunks"}
    instances: list[QAInstance] = []
    seen: set[str] = set()
    for line_no, row in _iter_jsonl(path, DatasetError):
        unknown = set(row) - allowed
        if unknown:
            raise DatasetError(f"{path}:{line_no}: unknown fields {sorted(unknown)}")
        qid = row.get("qid")
        question = row.get("question")
        answers = row.get("answers")
        if not isinstance(qid, str) or not qid:
            raise DatasetError(f"{path}:{line_no}: 'qid' must be a non-empty string")
        if qid in seen:
            raise DatasetError(f"{path}:{line_no}: duplicate qid {qid!r}")
        seen.add(qid)
        if not isinstance(question, str) or not question.strip():
            raise DatasetError(f"{path}:{line_no}: instance {qid!r} needs a question")
        if (
            not isinstance(answers, list)
            or not answers
            or not all(isinstance(a, str) and a.strip() for a in answers)
        ):
            raise DatasetError(
                f"{path}:{line_no}: instance {qid!r} needs a non-empty list of answers"
            )
        gold = row.get("gold_chunks", [])
        if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
            raise DatasetError(f"{path}:{line_no}: instance {qid!r} gold_chunks must be strings")
        for chunk_id in gold:
            if chunk_id not in corpus:
                raise DatasetError(
                    f"{path}:{line_no}: instance {qid!r} references unknown chunk {chunk_id!r}"
                )
        instances.append(
            QAInstance(
                qid=qid,
                question=question,
                answers=tuple(answers),
                gold_chunks=tuple(dict.fromkeys(gold)),
            )
        )
    return instances


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation and articles, squash whitespace."""
    text = text.casefold().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str | None, golds: Sequence[str]) -> float:
    """1.0 when the normalized prediction equals any normalized gold."""
    if prediction is None:
        return 0.0
    norm = normalize_answer(prediction)
    return 1.0 if any(norm == normalize_answer(g) for g in golds) else 0.0


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str | None, golds: Sequence[str]) -> float:
    """Best token-level F1 of the prediction against any gold answer."""
    if prediction is None:
        return 0.0
    return max((_f1_single(prediction, g) for g in golds), default=0.0)


def recall_at_k(retrieved: Sequence[str], gold: Sequence[str], k: int) -> float:
    """Fraction of gold chunks present in the first k distinct retrieved ids."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    gold_set = set(gold)
    if not gold_set:
        raise ValueError("recall is undefined for an empty gold set")
    top = list(dict.fromkeys(retrieved))[:k]
    return len(gold_set.intersection(top)) / len(gold_set)


@dataclass
class InstanceRecord:
    """Per-question evaluation result."""

    qid: str
    status: str
    answer: str | None
    em: float
    f1: float
    recall_at_2: float | None
    recall_at_5: float | None
    final_stage: str | None
    iterations: int
    prompt_tokens: int
    completion_tokens: int
    oracle_calls: int
    latency_s: float | None
    error: str | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "qid": self.qid,
            "status": self.status,
            "answer": self.answer,
            "em": self.em,
            "f1": self.f1,
            "recall_at_2": self.recall_at_2,
            "recall_at_5": self.recall_at_5,
            "final_stage": self.final_stage,
            "iterations": self.iterations,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "oracle_calls": self.oracle_calls,
            "latency_s": self.latency_s if include_timing else None,
            "error": self.error,
        }


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _p95(values: Sequence[float]) -> float | None:
    """Nearest-rank 95th percentile."""
    if not values:
        return None
    ordered = sorted(values)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[rank - 1]


@dataclass
class RunReport:
    """Aggregated benchmark output over one dataset."""

    records: list[InstanceRecord]
    include_timing: bool = True

    @property
    def size(self) -> int:
        return len(self.records)

    def stage_fractions(self) -> dict[str, float | None]:
        """Share of questions resolved at each stage; failures and abstentions
        land in the ``failed`` bucket. Fractions sum to 1 on non-empty data."""
        buckets = {"local": 0, "bridge": 0, "global": 0, "failed": 0}
        for record in self.records:
            if record.status == OutcomeStatus.ANSWERED.value and record.final_stage in buckets:
                buckets[record.final_stage] += 1
            else:
                buckets["failed"] += 1
        if not self.records:
            return {name: None for name in buckets}
        return {name: count / len(self.records) for name, count in buckets.items()}

    def aggregates(self) -> dict:
        latencies = [r.latency_s for r in self.records if r.latency_s is not None]
        recalls_2 = [r.recall_at_2 for r in self.records if r.recall_at_2 is not None]
        recalls_5 = [r.recall_at_5 for r in self.records if r.recall_at_5 is not None]
        timing_ok = self.include_timing and latencies
        return {
            "em": _mean([r.em for r in self.records]),
            "f1": _mean([r.f1 for r in self.records]),
            "recall_at_2": _mean(recalls_2),
            "recall_at_5": _mean(recalls_5),
            "mean_latency_s": _mean(latencies) if timing_ok else None,
            "p95_latency_s": _p95(latencies) if timing_ok else None,
            "mean_prompt_tokens": _mean([r.prompt_tokens for r in self.records]),
            "mean_completion_tokens": _mean([r.completion_tokens for r in self.records]),
            "mean_oracle_calls": _mean([r.oracle_calls for r in self.records]),
            "stage_fractions": self.stage_fractions(),
        }

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "aggregates": self.aggregates(),
            "records": [r.to_dict(include_timing=self.include_timing) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _record_outcome(
    instance: QAInstance,
    outcome: Outcome,
    latency_s: float | None,
) -> InstanceRecord:
    answer = outcome.answer
    has_gold = bool(instance.gold_chunks)
    return InstanceRecord(
        qid=instance.qid,
        status=outcome.status.value,
        answer=answer,
        em=exact_match(answer, instance.answers),
        f1=token_f1(answer, instance.answers),
        recall_at_2=recall_at_k(outcome.evidence, instance.gold_chunks, 2) if has_gold else None,
        recall_at_5=recall_at_k(outcome.evidence, instance.gold_chunks, 5) if has_gold else None,
        final_stage=outcome.final_stage,
        iterations=len(outcome.trace),
        prompt_tokens=outcome.cost.prompt_tokens,
        completion_tokens=outcome.cost.completion_tokens,
        oracle_calls=outcome.cost.total_calls(),
        latency_s=latency_s,
        error=outcome.error,
    )


def _failed_record(instance: QAInstance, error: str) -> InstanceRecord:
    return InstanceRecord(
        qid=instance.qid,
        status=OutcomeStatus.FAIL.value,
        answer=None,
        em=0.0,
        f1=0.0,
        recall_at_2=None,
        recall_at_5=None,
        final_stage=None,
        iterations=0,
        prompt_tokens=0,
        completion_tokens=0,
        oracle_calls=0,
        latency_s=None,
        error=error,
    )


def run_benchmark(
    dataset: Sequence[QAInstance],
    engine: Engine,
    *,
    ablate_relation_seeds: bool = False,
    map_back: bool = True,
    include_timing: bool | None = None,
    workers: int = 1,
) -> RunReport:
    """Answer every instance through the engine and aggregate the results.

    ``include_timing`` defaults to the opposite of the suite's deterministic
    flag, so mock runs emit reproducible reports. A crash on one instance is
    captured as a failed record instead of aborting the run.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if include_timing is None:
        include_timing = not engine.suite.deterministic

    def evaluate(instance: QAInstance) -> InstanceRecord:
        started = time.perf_counter()
        try:
            outcome = engine.answer(
                instance.question,
                ablate_relation_seeds=ablate_relation_seeds,
                map_back=map_back,
            )
        except Exception as exc:
            logger.exception("instance %s raised", instance.qid)
            return _failed_record(instance, repr(exc))
        latency = time.perf_counter() - started if include_timing else None
        return _record_outcome(instance, outcome, latency)

    if workers == 1 or len(dataset) <= 1:
        records = [evaluate(instance) for instance in dataset]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(evaluate, dataset))
    return RunReport(records=records, include_timing=include_timing)


def dense_chunk_ranking(query: str, corpus: Corpus, embedder) -> list[str]:
    """All chunk ids by descending embedding cosine; ties break on chunk id."""
    query_vec, _ = embedder.embed(query)
    scored = []
    for chunk_id in sorted(corpus.chunks):
        chunk_vec, _ = embedder.embed(corpus.chunk_text(chunk_id))
        scored.append((-float(np.dot(query_vec, chunk_vec)), chunk_id))
    scored.sort()
    return [chunk_id for _, chunk_id in scored]


def run_text_baseline(
    dataset: Sequence[QAInstance],
    corpus: Corpus,
    suite: OracleSuite,
    *,
    top_k: int = 5,
    include_timing: bool | None = None,
) -> RunReport:
    """Graph-free baseline: dense chunk ranking, one generation, one check.

    The ranking never sees the graph, so its retrieval metrics are immune
    to graph degradation by construction.
    """
    if include_timing is None:
        include_timing = not suite.deterministic
    records = []
    for instance in dataset:
        counters = CostCounters()
        metered = suite.metered(counters)
        started = time.perf_counter()
        retrieved = dense_chunk_ranking(instance.question, corpus, metered.embedder)
        texts = [corpus.chunk_text(chunk_id) for chunk_id in retrieved[:top_k]]
        answer, _ = metered.generator.generate(instance.question, texts)
        passed, _, _ = triple_check(instance.question, answer, texts, metered)
        latency = time.perf_counter() - started if include_timing else None
        has_gold = bool(instance.gold_chunks)
        status = OutcomeStatus.ANSWERED if passed else OutcomeStatus.FAIL
        scored_answer = answer if passed else None
        records.append(
            InstanceRecord(
                qid=instance.qid,
                status=status.value,
                answer=scored_answer,
                em=exact_match(scored_answer, instance.answers),
                f1=token_f1(scored_answer, instance.answers),
                recall_at_2=(
                    recall_at_k(retrieved, instance.gold_chunks, 2) if has_gold else None
                ),
                recall_at_5=(
                    recall_at_k(retrieved, instance.gold_chunks, 5) if has_gold else None
                ),
                final_stage=None,
                iterations=1,
                prompt_tokens=counters.prompt_tokens,
                completion_tokens=counters.completion_tokens,
                oracle_calls=counters.total_calls(),
                latency_s=latency,
            )
        )
    return RunReport(records=records, include_timing=include_timing)


def stress_delete(graph: KnowledgeGraph, fraction: float, rng_seed: int) -> KnowledgeGraph:
    """Rebuild the graph with a random node fraction (and incident edges) removed.

    Selection is seeded and drawn over the sorted node ids, so a given
    (graph, fraction, seed) always degrades identically. The corpus is
    untouched; surviving provenance stays valid.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"deletion fraction must be in [0, 1], got {fraction}")
    node_ids = sorted(graph.nodes)
    count = int(math.floor(fraction * len(node_ids) + 0.5))
    if count == 0:
        removed: set[str] = set()
    else:
        rng = np.random.default_rng(rng_seed)
        removed = set(rng.choice(node_ids, size=count, replace=False).tolist())
    nodes = [node for node_id, node in sorted(graph.nodes.items()) if node_id not in removed]
    edges = [
        edge
        for edge in graph.edges
        if edge.source not in removed and edge.target not in removed
    ]
    return KnowledgeGraph.build(nodes, edges)


@dataclass(frozen=True)
class StressSpec:
    """Sweep definition: which fractions, which strategies, which seed."""

    fractions: tuple[float, ...] = (0.0, 0.1, 0.2, 0.4)
    strategies: tuple[str, ...] = STRATEGIES
    rng_seed: int = 7

    def __post_init__(self) -> None:
        for fraction in self.fractions:
            if not 0.0 <= fraction <= 1.0:
                raise ValueError(f"deletion fraction must be in [0, 1], got {fraction}")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}; choose from {STRATEGIES}")


@dataclass
class StressReport:
    """Per-fraction, per-strategy benchmark reports."""

    spec: StressSpec
    runs: list[dict] = field(default_factory=list)

    def recall_curve(self, strategy: str, k: int = 5) -> list[float | None]:
        key = f"recall_at_{k}"
        curve = []
        for entry in self.runs:
            report = entry["reports"].get(strategy)
            curve.append(report["aggregates"][key] if report else None)
        return curve

    def to_dict(self) -> dict:
        return {
            "fractions": list(self.spec.fractions),
            "strategies": list(self.spec.strategies),
            "rng_seed": self.spec.rng_seed,
            "runs": self.runs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def stress_sweep(
    dataset: Sequence[QAInstance],
    engine: Engine,
    spec: StressSpec = StressSpec(),
    *,
    include_timing: bool | None = None,
    progress: Callable[[str], None] | None = None,
) -> StressReport:
    """Evaluate each strategy on each degraded graph.

    ``a2rag`` is the full engine; ``graph_only`` disables mapping ranked
    nodes back to their source chunks, leaving only chunks cited by
    traversed edges; ``text_only`` ignores the graph entirely. At fraction
    0.0 the degraded graph equals the original, so the ``a2rag`` entry
    matches a plain benchmark run.
    """
    report = StressReport(spec=spec)
    for fraction in spec.fractions:
        degraded = stress_delete(engine.graph, fraction, spec.rng_seed)
        reports: dict[str, dict] = {}
        for strategy in spec.strategies:
            if progress:
                progress(f"fraction={fraction:g} strategy={strategy}")
            if strategy == "a2rag":
                run_report = run_benchmark(
                    dataset, engine.with_graph(degraded), include_timing=include_timing
                )
            elif strategy == "graph_only":
                run_report = run_benchmark(
                    dataset,
                    engine.with_graph(degraded),
                    map_back=False,
                    include_timing=include_timing,
                )
            else:
                run_report = run_text_baseline(
                    dataset, engine.corpus, engine.suite, include_timing=include_timing
                )
            reports[strategy] = run_report.to_dict()
        report.runs.append({"fraction": fraction, "reports": reports})
    return report


def summarize_stress(report: StressReport | Mapping) -> str:
    """Human-readable table of recall@5 by fraction and strategy."""
    data = report.to_dict() if isinstance(report, StressReport) else dict(report)
    strategies = data["strategies"]
    lines = ["fraction  " + "  ".join(f"{s:>10}" for s in strategies)]
    for entry in data["runs"]:
        cells = []
        for strategy in strategies:
            value = entry["reports"][strategy]["aggregates"]["recall_at_5"]
            cells.append(f"{value:>10.3f}" if value is not None else f"{'n/a':>10}")
        lines.append(f"{entry['fraction']:<8g}  " + "  ".join(cells))
    return "\n".join(lines)
