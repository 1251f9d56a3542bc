"""Config loading, validation, and engine assembly."""

import json
from pathlib import Path

import pytest

from a2rag.config import (
    AppConfig,
    OracleSettings,
    SLOT_NAMES,
    build_engine,
    build_suite,
    load_config,
)
from a2rag.controller import Engine
from a2rag.errors import ConfigError, OracleConfigError
from a2rag.kg import load_corpus, load_graph
from conftest import fixture_config, write_jsonl

REMOTE_ENV = (
    "A2RAG_API_BASE",
    "A2RAG_API_KEY",
    "A2RAG_CHAT_MODEL",
    "A2RAG_EMBED_MODEL",
)


def write_world(root: Path) -> None:
    """Minimal consistent data files under root/data."""
    data = root / "data"
    data.mkdir()
    write_jsonl(
        data / "corpus.jsonl",
        [{"chunk_id": "c-1", "doc_id": "c", "text": "Avala works."}],
    )
    write_jsonl(data / "summaries.jsonl", [{"doc_id": "c", "summary": "About Avala."}])
    write_jsonl(
        data / "graph.jsonl",
        [
            {
                "type": "node",
                "node_id": "avala",
                "name": "Avala",
                "aliases": [],
                "chunks": ["c-1"],
            }
        ],
    )


def write_config(root: Path, payload: dict, name: str = "config.json") -> Path:
    path = root / name
    path.write_text(json.dumps(payload))
    return path


def minimal_payload(dataset: bool = False) -> dict:
    paths = {
        "corpus": "data/corpus.jsonl",
        "summaries": "data/summaries.jsonl",
        "graph": "data/graph.jsonl",
    }
    if dataset:
        paths["dataset"] = "data/dataset.jsonl"
    return {"paths": paths}


class TestOracleSettings:
    def test_defaults(self):
        settings = OracleSettings()
        assert settings.mode == "mock"
        assert settings.embed_dim == 32
        assert settings.seed == 0
        assert settings.judge_min_coverage == 0.6
        assert settings.prompt_dir is None
        assert settings.any_remote is False

    def test_slot_mode_falls_back_to_global_mode(self):
        settings = OracleSettings(mode="remote")
        assert all(settings.slot_mode(slot) == "remote" for slot in SLOT_NAMES)
        assert settings.any_remote is True

    def test_per_slot_override(self):
        settings = OracleSettings(slots={"judge": "remote"})
        assert settings.slot_mode("judge") == "remote"
        assert settings.slot_mode("embedder") == "mock"
        assert settings.any_remote is True

    def test_rejects_unknown_mode(self):
        with pytest.raises(ConfigError, match="oracles.mode"):
            OracleSettings(mode="local")

    def test_rejects_unknown_slot(self):
        with pytest.raises(ConfigError, match="unknown slot"):
            OracleSettings(slots={"oracle": "mock"})

    def test_rejects_bad_slot_mode(self):
        with pytest.raises(ConfigError, match="oracles.slots.judge"):
            OracleSettings(slots={"judge": "scripted"})

    def test_rejects_bad_embed_dim(self):
        with pytest.raises(ConfigError, match="embed_dim"):
            OracleSettings(embed_dim=0)

    def test_rejects_bad_coverage(self):
        with pytest.raises(ConfigError, match="judge_min_coverage"):
            OracleSettings(judge_min_coverage=1.5)


class TestLoadConfig:
    def test_minimal_config_uses_defaults(self, tmp_path):
        write_world(tmp_path)
        cfg = load_config(write_config(tmp_path, minimal_payload()))
        assert isinstance(cfg, AppConfig)
        assert cfg.base_dir == tmp_path.resolve()
        assert cfg.corpus_path == tmp_path.resolve() / "data" / "corpus.jsonl"
        assert cfg.dataset_path is None
        assert cfg.gate_cfg.tau_g == 0.35
        assert cfg.budget.i_max == 2
        assert cfg.non_retrieval_fallback is False
        assert cfg.retriever_cfg.hop_budget == 2
        assert cfg.retriever_cfg.ppr_handle_dangling is True
        assert cfg.align_cfg.tau_align == 0.8
        assert cfg.oracles.mode == "mock"

    def test_relative_paths_resolve_against_config_dir(self, tmp_path, monkeypatch):
        write_world(tmp_path)
        config_path = write_config(tmp_path, minimal_payload())
        monkeypatch.chdir(tmp_path.parent)
        cfg = load_config(config_path)
        assert cfg.graph_path.is_file()

    def test_absolute_paths_accepted(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["paths"]["corpus"] = str(tmp_path / "data" / "corpus.jsonl")
        cfg = load_config(write_config(tmp_path, payload))
        assert cfg.corpus_path == tmp_path / "data" / "corpus.jsonl"

    def test_dataset_path_optional_but_resolved(self, tmp_path):
        write_world(tmp_path)
        write_jsonl(
            tmp_path / "data" / "dataset.jsonl",
            [{"qid": "q1", "question": "Who?", "answers": ["Avala"], "gold_chunks": ["c-1"]}],
        )
        cfg = load_config(write_config(tmp_path, minimal_payload(dataset=True)))
        assert cfg.dataset_path == tmp_path.resolve() / "data" / "dataset.jsonl"

    def test_missing_file_rejected(self, tmp_path):
        write_world(tmp_path)
        (tmp_path / "data" / "graph.jsonl").unlink()
        with pytest.raises(ConfigError, match="paths.graph: no such file"):
            load_config(write_config(tmp_path, minimal_payload()))

    def test_missing_required_path_key(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        del payload["paths"]["corpus"]
        with pytest.raises(ConfigError, match="paths.corpus is required"):
            load_config(write_config(tmp_path, payload))

    def test_empty_path_value_rejected(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["paths"]["summaries"] = ""
        with pytest.raises(ConfigError, match="non-empty string"):
            load_config(write_config(tmp_path, payload))

    def test_unknown_top_level_key(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["retreiver"] = {}
        with pytest.raises(ConfigError, match="retreiver"):
            load_config(write_config(tmp_path, payload))

    def test_unknown_section_key(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["gate"] = {"tau": 0.2}
        with pytest.raises(ConfigError, match=r"gate: unknown keys \['tau'\]"):
            load_config(write_config(tmp_path, payload))

    def test_retriever_section_has_no_dangling_switch(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["retriever"] = {"ppr_handle_dangling": False}
        with pytest.raises(ConfigError, match="ppr_handle_dangling"):
            load_config(write_config(tmp_path, payload))

    def test_section_must_be_object(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["controller"] = [1]
        with pytest.raises(ConfigError, match="section 'controller' must be an object"):
            load_config(write_config(tmp_path, payload))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_non_object_document(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="must be a JSON object"):
            load_config(path)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "absent.json")

    def test_bad_gate_value_reports_section(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["gate"] = {"tau_g": 1.5}
        with pytest.raises(ConfigError, match="gate:"):
            load_config(write_config(tmp_path, payload))

    def test_bad_retriever_value_reports_section(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["retriever"] = {"alpha": 1.5}
        with pytest.raises(ConfigError, match="retriever:"):
            load_config(write_config(tmp_path, payload))

    def test_bad_controller_budget(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["controller"] = {"i_max": -1}
        with pytest.raises(ConfigError, match="controller:"):
            load_config(write_config(tmp_path, payload))

    def test_fallback_must_be_boolean(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["controller"] = {"non_retrieval_fallback": "yes"}
        with pytest.raises(ConfigError, match="non_retrieval_fallback"):
            load_config(write_config(tmp_path, payload))

    def test_sections_apply(self, tmp_path):
        write_world(tmp_path)
        payload = minimal_payload()
        payload["gate"] = {"tau_g": 0.1}
        payload["controller"] = {"i_max": 5, "non_retrieval_fallback": True}
        payload["retriever"] = {"hop_budget": 3, "alpha": 0.2, "top_l": 4}
        payload["alignment"] = {"lambda_lex": 0.25, "tau_align": 0.5, "max_seeds": 3}
        payload["oracles"] = {"embed_dim": 8, "seed": 7, "judge_min_coverage": 0.5}
        cfg = load_config(write_config(tmp_path, payload))
        assert cfg.gate_cfg.tau_g == 0.1
        assert cfg.budget.i_max == 5
        assert cfg.non_retrieval_fallback is True
        assert cfg.retriever_cfg.hop_budget == 3
        assert cfg.retriever_cfg.top_l == 4
        assert cfg.align_cfg.max_seeds == 3
        assert cfg.oracles.embed_dim == 8
        assert cfg.oracles.seed == 7

    def test_describe_is_json_serializable(self, tmp_path):
        write_world(tmp_path)
        cfg = load_config(write_config(tmp_path, minimal_payload()))
        described = json.loads(json.dumps(cfg.describe()))
        assert described["paths"]["dataset"] is None
        assert described["paths"]["corpus"].endswith("corpus.jsonl")
        assert described["retriever"]["alpha"] == 0.15
        assert described["oracles"]["mode"] == "mock"
        assert "ppr_handle_dangling" not in described["retriever"]


class TestBuildSuite:
    def graph(self, tmp_path):
        write_world(tmp_path)
        corpus = load_corpus(tmp_path / "data" / "corpus.jsonl")
        return load_graph(tmp_path / "data" / "graph.jsonl", corpus)

    def test_mock_suite(self, tmp_path):
        graph = self.graph(tmp_path)
        suite = build_suite(OracleSettings(embed_dim=8, seed=3), graph)
        assert suite.deterministic is True
        vector, _ = suite.embedder.embed("anything")
        assert vector.shape == (8,)

    def test_remote_without_env_fails(self, tmp_path, monkeypatch):
        for name in REMOTE_ENV:
            monkeypatch.delenv(name, raising=False)
        graph = self.graph(tmp_path)
        with pytest.raises(OracleConfigError, match="environment variables"):
            build_suite(OracleSettings(mode="remote"), graph)

    def test_mixed_suite_swaps_only_remote_slots(self, tmp_path, monkeypatch):
        monkeypatch.setenv("A2RAG_API_BASE", "https://api.example.test/v1")
        monkeypatch.setenv("A2RAG_API_KEY", "key")
        monkeypatch.setenv("A2RAG_CHAT_MODEL", "chat-1")
        monkeypatch.setenv("A2RAG_EMBED_MODEL", "embed-1")
        graph = self.graph(tmp_path)
        suite = build_suite(OracleSettings(slots={"judge": "remote"}), graph)
        assert suite.deterministic is False
        assert suite.judge.name.startswith("remote")
        assert suite.embedder.name.startswith("mock")
        assert suite.generator.name.startswith("mock") or "extractive" in suite.generator.name


class TestBuildEngine:
    def test_smoke_engine_answers(self, tmp_path):
        cfg = load_config(fixture_config(tmp_path, "smoke"))
        engine = build_engine(cfg)
        assert isinstance(engine, Engine)
        assert "s1" in engine.corpus.chunks
        outcome = engine.answer("Which group works with Avala Corp?")
        assert outcome.status == "answered"

    def test_dataset_not_loaded_by_engine(self, tmp_path):
        write_world(tmp_path)
        cfg = load_config(write_config(tmp_path, minimal_payload()))
        engine = build_engine(cfg)
        assert engine.suite.deterministic is True
