"""Oracle interfaces, deterministic mock implementations, and call metering.

Every model-backed decision in the engine goes through one of the slots in
:class:`OracleSuite`: embedding, answer generation, the three answer
validators, evidence sufficiency judging, query rewriting, mention
extraction, and (for knowledge-base update proposals) triple extraction.

Each oracle method returns ``(value, TokenUsage)``. Remote adapters report
real token usage; the mocks report synthetic counts derived from their
inputs so that cost accounting stays deterministic offline. Wrapping a
suite with :meth:`OracleSuite.metered` produces per-run call and token
counters without touching the underlying implementations, which stay
shareable across threads.
"""

from __future__ import annotations

import hashlib
import logging
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from . import textutil
from .kg import KnowledgeGraph

logger = logging.getLogger(__name__)

UNKNOWN_MARKER = "UNKNOWN"


class TokenUsage(NamedTuple):
    prompt: int = 0
    completion: int = 0


@dataclass
class CostCounters:
    """Per-run accounting: calls per oracle name plus token totals."""

    oracle_calls: dict[str, int] = field(default_factory=dict)
    prompt_tokens: int = 0
    completion_tokens: int = 0
    wall_time_s: float = 0.0

    def record(self, name: str, usage: TokenUsage) -> None:
        self.oracle_calls[name] = self.oracle_calls.get(name, 0) + 1
        self.prompt_tokens += usage.prompt
        self.completion_tokens += usage.completion

    def total_calls(self) -> int:
        return sum(self.oracle_calls.values())

    def calls(self, name: str) -> int:
        return self.oracle_calls.get(name, 0)

    def merge(self, other: "CostCounters") -> None:
        for name, count in other.oracle_calls.items():
            self.oracle_calls[name] = self.oracle_calls.get(name, 0) + count
        self.prompt_tokens += other.prompt_tokens
        self.completion_tokens += other.completion_tokens
        self.wall_time_s += other.wall_time_s

    def to_dict(self, include_timing: bool = True) -> dict:
        out: dict = {
            "oracle_calls": dict(sorted(self.oracle_calls.items())),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }
        out["wall_time_s"] = self.wall_time_s if include_timing else None
        return out


class Sufficiency(str, Enum):
    SUFFICIENT = "sufficient"
    ESCALATE = "escalate"


def _synthetic_usage(*texts: str, completion: str = "") -> TokenUsage:
    prompt = sum(len(t.split()) for t in texts)
    return TokenUsage(prompt=prompt, completion=len(completion.split()))


# --------------------------------------------------------------------------
# Interfaces
# --------------------------------------------------------------------------


class TextEmbedder(Protocol):
    name: str

    def embed(self, text: str) -> tuple[np.ndarray, TokenUsage]:
        """Unit-norm vector for ``text``. Deterministic per input."""
        ...


class AnswerGenerator(Protocol):
    name: str

    def generate(self, query: str, evidence_texts: Sequence[str]) -> tuple[str, TokenUsage]:
        ...


class BinaryValidator(Protocol):
    name: str

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        ...


class SufficiencyJudge(Protocol):
    name: str

    def judge(
        self, query: str, evidence_texts: Sequence[str], stage: str
    ) -> tuple[Sufficiency, TokenUsage]:
        ...


class QueryRewriter(Protocol):
    name: str

    def rewrite(
        self,
        query: str,
        answer: str,
        evidence_texts: Sequence[str],
        failure: str,
        entity_names: Sequence[str],
    ) -> tuple[str, TokenUsage]:
        ...


class MentionExtractor(Protocol):
    name: str

    def extract(self, query: str) -> tuple[tuple[list[str], list[str]], TokenUsage]:
        """Return ``((entity_mentions, relation_mentions), usage)``."""
        ...


class TripleCandidate(NamedTuple):
    subject: str
    relation: str
    object: str
    source_chunk_id: str


class TripleExtractor(Protocol):
    name: str

    def extract_triples(
        self, chunks: Sequence[tuple[str, str]]
    ) -> tuple[list[TripleCandidate], TokenUsage]:
        """Propose triples from ``(chunk_id, chunk_text)`` pairs."""
        ...


# --------------------------------------------------------------------------
# Mock implementations
# --------------------------------------------------------------------------


class MockEmbedder:
    """Hash-derived unit vectors: equal text, equal vector, any process.

    ``pin`` lets tests fix exact vectors for chosen strings, e.g. to stage a
    specific cosine between a query and a summary.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 2:
            raise ValueError("embedding dim must be at least 2")
        self.name = "mock-embedder"
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def pin(self, text: str, vector: Sequence[float]) -> None:
        arr = np.asarray(vector, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("cannot pin a zero vector")
        with self._lock:
            self._cache[text] = arr / norm

    def embed(self, text: str) -> tuple[np.ndarray, TokenUsage]:
        usage = _synthetic_usage(text)
        with self._lock:
            vec = self._cache.get(text)
            if vec is None:
                digest = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
                rng = np.random.default_rng(int.from_bytes(digest, "big"))
                raw = rng.standard_normal(self.dim)
                vec = raw / np.linalg.norm(raw)
                self._cache[text] = vec
        return vec, usage


class ExtractiveGenerator:
    """Answers with the evidence sentence sharing the most query words.

    No evidence at all yields the unknown marker, which the resolution
    validator rejects.
    """

    name = "mock-generator"

    def generate(self, query: str, evidence_texts: Sequence[str]) -> tuple[str, TokenUsage]:
        usage_inputs = [query, *evidence_texts]
        query_words = textutil.content_word_set(query)
        best: str | None = None
        best_overlap = -1
        for text in evidence_texts:
            for sentence in textutil.sentences(text):
                overlap = len(query_words & textutil.content_word_set(sentence))
                if overlap > best_overlap:
                    best = sentence
                    best_overlap = overlap
        answer = best if best is not None else UNKNOWN_MARKER
        return answer, _synthetic_usage(*usage_inputs, completion=answer)


class KeywordRelevanceValidator:
    """Evidence is relevant when it shares any content word with the query."""

    name = "keyword-validator-rel"

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        evidence_words = textutil.content_word_set(" ".join(evidence_texts))
        ok = bool(textutil.content_word_set(query) & evidence_words)
        return ok, _synthetic_usage(query, *evidence_texts)


class KeywordGroundingValidator:
    """An answer is grounded when all its content words occur in evidence."""

    name = "keyword-validator-grd"

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        evidence_words = textutil.content_word_set(" ".join(evidence_texts))
        answer_words = textutil.content_word_set(answer)
        ok = answer_words <= evidence_words
        return ok, _synthetic_usage(answer, *evidence_texts)


class KeywordResolutionValidator:
    """An answer resolves the question when non-empty and not the marker."""

    name = "keyword-validator-ans"

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        stripped = answer.strip()
        ok = bool(stripped) and stripped != UNKNOWN_MARKER
        return ok, _synthetic_usage(query, answer)


class KeywordSufficiencyJudge:
    """Escalates until evidence covers a fraction of the query's words."""

    name = "mock-judge"

    def __init__(self, min_coverage: float = 0.6):
        if not 0.0 <= min_coverage:
            raise ValueError("min_coverage must be non-negative")
        self.min_coverage = min_coverage

    def judge(
        self, query: str, evidence_texts: Sequence[str], stage: str
    ) -> tuple[Sufficiency, TokenUsage]:
        usage = _synthetic_usage(query, *evidence_texts)
        query_words = textutil.content_word_set(query)
        if not query_words:
            return Sufficiency.SUFFICIENT, usage
        evidence_words = textutil.content_word_set(" ".join(evidence_texts))
        coverage = len(query_words & evidence_words) / len(query_words)
        verdict = Sufficiency.SUFFICIENT if coverage >= self.min_coverage else Sufficiency.ESCALATE
        return verdict, usage


_STAGE_RANK = {"local": 0, "bridge": 1, "global": 2}


class ScriptedSufficiencyJudge:
    """Accepts once the named stage is reached; 'never' always escalates.

    ``plan`` may be a single stage name applied to every query or a mapping
    from query text to stage name, with ``default`` as the fallback.
    """

    name = "scripted-judge"

    def __init__(self, plan: str | Mapping[str, str] = "never", default: str = "never"):
        self.plan = plan
        self.default = default

    def _target(self, query: str) -> str:
        if isinstance(self.plan, str):
            return self.plan
        return self.plan.get(query, self.default)

    def judge(
        self, query: str, evidence_texts: Sequence[str], stage: str
    ) -> tuple[Sufficiency, TokenUsage]:
        usage = _synthetic_usage(query, *evidence_texts)
        target = self._target(query)
        if target == "never":
            return Sufficiency.ESCALATE, usage
        if target not in _STAGE_RANK:
            raise ValueError(f"unknown stage {target!r} in judge plan")
        reached = _STAGE_RANK[stage] >= _STAGE_RANK[target]
        return (Sufficiency.SUFFICIENT if reached else Sufficiency.ESCALATE), usage


GROUNDING_DIRECTIVE = "[answer strictly from the provided evidence]"
CONSTRAINT_DIRECTIVE = "[resolve every condition stated in the question]"


class TemplateRewriter:
    """Failure-typed deterministic rewrites.

    Relevance failures append the aligned entity names to disambiguate;
    grounding failures append a strict-grounding directive; resolution
    failures append an unresolved-constraint directive.
    """

    name = "mock-rewriter"

    def rewrite(
        self,
        query: str,
        answer: str,
        evidence_texts: Sequence[str],
        failure: str,
        entity_names: Sequence[str],
    ) -> tuple[str, TokenUsage]:
        if failure == "rel":
            names = "; ".join(entity_names) if entity_names else "unknown"
            rewritten = f"{query} (entity: {names})"
        elif failure == "grd":
            rewritten = f"{query} {GROUNDING_DIRECTIVE}"
        elif failure == "ans":
            rewritten = f"{query} {CONSTRAINT_DIRECTIVE}"
        else:
            raise ValueError(f"unknown failure type {failure!r}")
        return rewritten, _synthetic_usage(query, answer, completion=rewritten)


def _boundary_pattern(phrases: Iterable[str]) -> re.Pattern | None:
    escaped = sorted((re.escape(p) for p in phrases if p), key=len, reverse=True)
    if not escaped:
        return None
    return re.compile(r"(?<!\w)(?:" + "|".join(escaped) + r")(?!\w)")


class LexiconMentionExtractor:
    """Finds known surface forms in the query and emits canonical mentions.

    Entity aliases are resolved to their canonical names; relation labels
    are matched with underscores read as spaces and emitted verbatim. This
    is the default offline extractor: no model, fully deterministic.
    """

    name = "mock-extractor"

    def __init__(self, entities: Mapping[str, str], relation_labels: Sequence[str] = ()):
        # surface (casefolded) -> canonical name
        self._entities = {textutil.squash_ws(k.casefold()): v for k, v in entities.items()}
        self._entity_pattern = _boundary_pattern(self._entities)
        self._relations = {
            textutil.squash_ws(label.replace("_", " ").casefold()): label
            for label in relation_labels
        }
        self._relation_pattern = _boundary_pattern(self._relations)

    @classmethod
    def from_graph(cls, graph: KnowledgeGraph) -> "LexiconMentionExtractor":
        entities: dict[str, str] = {}
        for node in graph.nodes.values():
            for form in node.surface_forms():
                entities.setdefault(form, node.canonical_name)
        return cls(entities, graph.relation_labels)

    def extract(self, query: str) -> tuple[tuple[list[str], list[str]], TokenUsage]:
        folded = textutil.squash_ws(query.casefold())
        entities: list[str] = []
        if self._entity_pattern is not None:
            entities = [self._entities[m] for m in self._entity_pattern.findall(folded)]
        relations: list[str] = []
        if self._relation_pattern is not None:
            relations = [self._relations[m] for m in self._relation_pattern.findall(folded)]
        return (entities, relations), _synthetic_usage(query)


class ScriptedMentionExtractor:
    """Emits a fixed mention list regardless of the query."""

    name = "scripted-extractor"

    def __init__(self, entities: Sequence[str] = (), relations: Sequence[str] = ()):
        self.entities = list(entities)
        self.relations = list(relations)

    def extract(self, query: str) -> tuple[tuple[list[str], list[str]], TokenUsage]:
        return (list(self.entities), list(self.relations)), _synthetic_usage(query)


class LexiconTripleExtractor:
    """Proposes ``subject relation object`` triples by pattern match.

    Scans chunk text for ``<known name> <label as words> <known name>``
    runs, using the same lexicons as the mention extractor. Useful for the
    human-in-the-loop update path without any model in the loop.
    """

    name = "mock-triple-extractor"

    def __init__(self, entities: Mapping[str, str], relation_labels: Sequence[str]):
        self._entities = {textutil.squash_ws(k.casefold()): v for k, v in entities.items()}
        self._relations = {
            textutil.squash_ws(label.replace("_", " ").casefold()): label
            for label in relation_labels
        }
        names = "|".join(
            re.escape(s) for s in sorted(self._entities, key=len, reverse=True)
        )
        labels = "|".join(
            re.escape(s) for s in sorted(self._relations, key=len, reverse=True)
        )
        if names and labels:
            self._pattern = re.compile(
                rf"(?<!\w)(?P<subj>{names})\s+(?P<rel>{labels})\s+(?P<obj>{names})(?!\w)"
            )
        else:
            self._pattern = None

    @classmethod
    def from_graph(cls, graph: KnowledgeGraph) -> "LexiconTripleExtractor":
        entities: dict[str, str] = {}
        for node in graph.nodes.values():
            for form in node.surface_forms():
                entities.setdefault(form, node.canonical_name)
        return cls(entities, graph.relation_labels)

    def extract_triples(
        self, chunks: Sequence[tuple[str, str]]
    ) -> tuple[list[TripleCandidate], TokenUsage]:
        usage = _synthetic_usage(*(text for _, text in chunks))
        candidates: list[TripleCandidate] = []
        seen: set[TripleCandidate] = set()
        if self._pattern is None:
            return candidates, usage
        for chunk_id, text in chunks:
            folded = textutil.squash_ws(text.casefold())
            for match in self._pattern.finditer(folded):
                candidate = TripleCandidate(
                    subject=self._entities[match.group("subj")],
                    relation=self._relations[match.group("rel")],
                    object=self._entities[match.group("obj")],
                    source_chunk_id=chunk_id,
                )
                if candidate not in seen:
                    seen.add(candidate)
                    candidates.append(candidate)
        return candidates, usage


class ScriptedTripleExtractor:
    """Emits a fixed candidate list, ignoring the chunks it is shown."""

    name = "scripted-triple-extractor"

    def __init__(self, candidates: Sequence[TripleCandidate] = ()):
        self.candidates = list(candidates)

    def extract_triples(
        self, chunks: Sequence[tuple[str, str]]
    ) -> tuple[list[TripleCandidate], TokenUsage]:
        return list(self.candidates), _synthetic_usage(*(t for _, t in chunks))


class ScriptedValidator:
    """Returns a fixed verdict, or pops from a sequence (last value sticks)."""

    def __init__(self, verdicts: bool | Sequence[bool], name: str = "scripted-validator"):
        self.name = name
        self._verdicts = [verdicts] if isinstance(verdicts, bool) else list(verdicts)
        if not self._verdicts:
            raise ValueError("verdict sequence must be non-empty")
        self._index = 0

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        verdict = self._verdicts[min(self._index, len(self._verdicts) - 1)]
        self._index += 1
        return verdict, _synthetic_usage(query, answer)


class ScriptedGenerator:
    """Answers from a fixed string or a query -> answer mapping."""

    name = "scripted-generator"

    def __init__(self, answers: str | Mapping[str, str], default: str = UNKNOWN_MARKER):
        self.answers = answers
        self.default = default

    def generate(self, query: str, evidence_texts: Sequence[str]) -> tuple[str, TokenUsage]:
        if isinstance(self.answers, str):
            answer = self.answers
        else:
            answer = self.answers.get(query, self.default)
        return answer, _synthetic_usage(query, completion=answer)


# --------------------------------------------------------------------------
# Suite assembly and metering
# --------------------------------------------------------------------------


class _MeteredSlot:
    """Delegates to one oracle, recording each call into shared counters.

    Works for every slot because all oracle methods return a
    ``(value, TokenUsage)`` pair.
    """

    def __init__(self, inner, counters: CostCounters):
        self._inner = inner
        self._counters = counters

    @property
    def name(self) -> str:
        return self._inner.name

    def __getattr__(self, attr: str):
        target = getattr(self._inner, attr)
        if not callable(target):
            return target

        def call(*args, **kwargs):
            value, usage = target(*args, **kwargs)
            self._counters.record(self._inner.name, usage)
            return value, usage

        return call


@dataclass(frozen=True)
class OracleSuite:
    """One oracle per decision point, plus the triple proposer."""

    embedder: TextEmbedder
    generator: AnswerGenerator
    validator_rel: BinaryValidator
    validator_grd: BinaryValidator
    validator_ans: BinaryValidator
    judge: SufficiencyJudge
    rewriter: QueryRewriter
    extractor: MentionExtractor
    triple_extractor: TripleExtractor
    deterministic: bool = True

    @classmethod
    def mock(
        cls,
        graph: KnowledgeGraph | None = None,
        *,
        dim: int = 32,
        seed: int = 0,
        judge_min_coverage: float = 0.6,
    ) -> "OracleSuite":
        """Fully offline suite. The lexicon extractors need the graph; with
        no graph they match nothing."""
        if graph is not None:
            extractor = LexiconMentionExtractor.from_graph(graph)
            triple_extractor = LexiconTripleExtractor.from_graph(graph)
        else:
            extractor = LexiconMentionExtractor({}, ())
            triple_extractor = LexiconTripleExtractor({}, ())
        return cls(
            embedder=MockEmbedder(dim=dim, seed=seed),
            generator=ExtractiveGenerator(),
            validator_rel=KeywordRelevanceValidator(),
            validator_grd=KeywordGroundingValidator(),
            validator_ans=KeywordResolutionValidator(),
            judge=KeywordSufficiencyJudge(min_coverage=judge_min_coverage),
            rewriter=TemplateRewriter(),
            extractor=extractor,
            triple_extractor=triple_extractor,
            deterministic=True,
        )

    def metered(self, counters: CostCounters) -> "OracleSuite":
        """A view of this suite that records every call into ``counters``."""
        return OracleSuite(
            embedder=_MeteredSlot(self.embedder, counters),
            generator=_MeteredSlot(self.generator, counters),
            validator_rel=_MeteredSlot(self.validator_rel, counters),
            validator_grd=_MeteredSlot(self.validator_grd, counters),
            validator_ans=_MeteredSlot(self.validator_ans, counters),
            judge=_MeteredSlot(self.judge, counters),
            rewriter=_MeteredSlot(self.rewriter, counters),
            extractor=_MeteredSlot(self.extractor, counters),
            triple_extractor=_MeteredSlot(self.triple_extractor, counters),
            deterministic=self.deterministic,
        )
