"""Strict JSON configuration and engine assembly.

A config file names the data files and tunes every layer. Unknown keys are
rejected at every level so typos fail loudly instead of silently running
with defaults. Relative paths are resolved against the config file's own
directory, and the referenced files must exist at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .controller import ControllerBudget, Engine, GateConfig
from .errors import ConfigError
from .kg import load_corpus, load_graph, load_summaries
from .oracles import OracleSuite
from .retriever import RetrieverConfig
from .seeding import AlignConfig

SLOT_NAMES = (
    "embedder",
    "generator",
    "validator_rel",
    "validator_grd",
    "validator_ans",
    "judge",
    "rewriter",
    "extractor",
    "triple_extractor",
)

_MODES = ("mock", "remote")


def _check_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _section(raw: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = raw.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"section {name!r} must be an object")
    return value


def _build(cls, kwargs: Mapping[str, Any], where: str):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class OracleSettings:
    """Which oracle backend serves each slot, plus mock parameters."""

    mode: str = "mock"
    slots: Mapping[str, str] = field(default_factory=dict)
    embed_dim: int = 32
    seed: int = 0
    judge_min_coverage: float = 0.6
    prompt_dir: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"oracles.mode must be one of {_MODES}, got {self.mode!r}")
        for slot, mode in self.slots.items():
            if slot not in SLOT_NAMES:
                raise ConfigError(f"oracles.slots: unknown slot {slot!r}")
            if mode not in _MODES:
                raise ConfigError(
                    f"oracles.slots.{slot} must be one of {_MODES}, got {mode!r}"
                )
        if self.embed_dim < 1:
            raise ConfigError(f"oracles.embed_dim must be >= 1, got {self.embed_dim}")
        if not 0.0 <= self.judge_min_coverage <= 1.0:
            raise ConfigError(
                f"oracles.judge_min_coverage must be in [0, 1], got {self.judge_min_coverage}"
            )

    def slot_mode(self, slot: str) -> str:
        return self.slots.get(slot, self.mode)

    @property
    def any_remote(self) -> bool:
        return any(self.slot_mode(slot) == "remote" for slot in SLOT_NAMES)


@dataclass(frozen=True)
class AppConfig:
    """Fully validated configuration with resolved paths."""

    base_dir: Path
    corpus_path: Path
    summaries_path: Path
    graph_path: Path
    dataset_path: Path | None
    gate_cfg: GateConfig
    budget: ControllerBudget
    non_retrieval_fallback: bool
    retriever_cfg: RetrieverConfig
    align_cfg: AlignConfig
    oracles: OracleSettings

    def describe(self) -> dict:
        return {
            "paths": {
                "corpus": str(self.corpus_path),
                "summaries": str(self.summaries_path),
                "graph": str(self.graph_path),
                "dataset": str(self.dataset_path) if self.dataset_path else None,
            },
            "gate": {"tau_g": self.gate_cfg.tau_g},
            "controller": {
                "i_max": self.budget.i_max,
                "non_retrieval_fallback": self.non_retrieval_fallback,
            },
            "retriever": {
                "hop_budget": self.retriever_cfg.hop_budget,
                "alpha": self.retriever_cfg.alpha,
                "top_l": self.retriever_cfg.top_l,
                "ppr_epsilon": self.retriever_cfg.ppr_epsilon,
                "ppr_max_iters": self.retriever_cfg.ppr_max_iters,
                "max_paths_per_pair": self.retriever_cfg.max_paths_per_pair,
                "max_triples": self.retriever_cfg.max_triples,
            },
            "alignment": {
                "lambda_lex": self.align_cfg.lambda_lex,
                "tau_align": self.align_cfg.tau_align,
                "max_seeds": self.align_cfg.max_seeds,
            },
            "oracles": {
                "mode": self.oracles.mode,
                "slots": dict(self.oracles.slots),
                "embed_dim": self.oracles.embed_dim,
                "seed": self.oracles.seed,
                "judge_min_coverage": self.oracles.judge_min_coverage,
                "prompt_dir": self.oracles.prompt_dir,
            },
        }


def _resolve_path(
    base_dir: Path, section: Mapping[str, Any], key: str, *, required: bool
) -> Path | None:
    value = section.get(key)
    if value is None:
        if required:
            raise ConfigError(f"paths.{key} is required")
        return None
    if not isinstance(value, str) or not value:
        raise ConfigError(f"paths.{key} must be a non-empty string")
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ConfigError(f"paths.{key}: no such file: {path}")
    return path


def load_config(path: str | Path) -> AppConfig:
    """Parse and validate a JSON config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config {path} must be a JSON object")
    _check_keys(
        raw, {"paths", "gate", "controller", "retriever", "alignment", "oracles"}, "config"
    )

    base_dir = path.resolve().parent
    paths = _section(raw, "paths")
    _check_keys(paths, {"corpus", "summaries", "graph", "dataset"}, "paths")
    corpus_path = _resolve_path(base_dir, paths, "corpus", required=True)
    summaries_path = _resolve_path(base_dir, paths, "summaries", required=True)
    graph_path = _resolve_path(base_dir, paths, "graph", required=True)
    dataset_path = _resolve_path(base_dir, paths, "dataset", required=False)

    gate_section = _section(raw, "gate")
    _check_keys(gate_section, {"tau_g"}, "gate")
    gate_cfg = _build(GateConfig, gate_section, "gate")

    controller_section = dict(_section(raw, "controller"))
    _check_keys(set(controller_section), {"i_max", "non_retrieval_fallback"}, "controller")
    fallback = controller_section.pop("non_retrieval_fallback", False)
    if not isinstance(fallback, bool):
        raise ConfigError("controller.non_retrieval_fallback must be a boolean")
    budget = _build(ControllerBudget, controller_section, "controller")

    retriever_section = _section(raw, "retriever")
    _check_keys(
        retriever_section,
        {
            "hop_budget",
            "alpha",
            "top_l",
            "ppr_epsilon",
            "ppr_max_iters",
            "max_paths_per_pair",
            "max_triples",
        },
        "retriever",
    )
    retriever_cfg = _build(RetrieverConfig, retriever_section, "retriever")

    alignment_section = _section(raw, "alignment")
    _check_keys(alignment_section, {"lambda_lex", "tau_align", "max_seeds"}, "alignment")
    align_cfg = _build(AlignConfig, alignment_section, "alignment")

    oracle_section = _section(raw, "oracles")
    _check_keys(
        oracle_section,
        {"mode", "slots", "embed_dim", "seed", "judge_min_coverage", "prompt_dir"},
        "oracles",
    )
    oracles = _build(OracleSettings, oracle_section, "oracles")

    return AppConfig(
        base_dir=base_dir,
        corpus_path=corpus_path,
        summaries_path=summaries_path,
        graph_path=graph_path,
        dataset_path=dataset_path,
        gate_cfg=gate_cfg,
        budget=budget,
        non_retrieval_fallback=fallback,
        retriever_cfg=retriever_cfg,
        align_cfg=align_cfg,
        oracles=oracles,
    )


def build_suite(settings: OracleSettings, graph) -> OracleSuite:
    """Assemble the oracle suite, mixing mock and remote slots as configured."""
    mock = OracleSuite.mock(
        graph=graph,
        dim=settings.embed_dim,
        seed=settings.seed,
        judge_min_coverage=settings.judge_min_coverage,
    )
    if not settings.any_remote:
        return mock
    from . import remote

    remote_suite = remote.remote_suite(prompt_dir=settings.prompt_dir)
    kwargs = {
        slot: getattr(remote_suite if settings.slot_mode(slot) == "remote" else mock, slot)
        for slot in SLOT_NAMES
    }
    return OracleSuite(deterministic=False, **kwargs)


def build_engine(cfg: AppConfig) -> Engine:
    """Load the data files named by the config and wire up an engine."""
    corpus = load_corpus(cfg.corpus_path)
    corpus = load_summaries(cfg.summaries_path, corpus)
    graph = load_graph(cfg.graph_path, corpus)
    suite = build_suite(cfg.oracles, graph)
    return Engine(
        graph=graph,
        corpus=corpus,
        suite=suite,
        gate_cfg=cfg.gate_cfg,
        budget=cfg.budget,
        retriever_cfg=cfg.retriever_cfg,
        align_cfg=cfg.align_cfg,
        non_retrieval_fallback=cfg.non_retrieval_fallback,
    )
