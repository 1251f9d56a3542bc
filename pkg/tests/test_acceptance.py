"""Release-gate checks.

Each test pins one externally checkable guarantee of the engine, scored
against independent references: dense linear solves for walk scores,
Floyd-Warshall distances for neighborhoods, hand-computed metric values,
and byte-level determinism of reports. The terminal summary prints one
ACCEPTANCE line per criterion (see conftest).
"""

import dataclasses
import hashlib
import json
import time

import numpy as np
import pytest

from a2rag.bench import (
    QAInstance,
    StressSpec,
    exact_match,
    load_dataset,
    recall_at_k,
    run_benchmark,
    stress_sweep,
    token_f1,
)
from a2rag.cli import main
from a2rag.config import build_engine, load_config
from a2rag.controller import (
    ControllerBudget,
    Engine,
    FailureType,
    GateConfig,
    OutcomeStatus,
    triple_check,
)
from a2rag.kg import load_corpus, load_graph
from a2rag.oracles import (
    CostCounters,
    OracleSuite,
    ScriptedSufficiencyJudge,
    ScriptedValidator,
)
from a2rag.retriever import (
    AlignConfig,
    RetrieverConfig,
    Telemetry,
    find_bridges,
    khop_set,
    ppr_scores,
)
from conftest import (
    FIXTURES,
    dense_walk_reference,
    fixture_config,
    floyd_warshall,
    make_corpus,
    make_graph,
    random_graph,
)


def control_world():
    """Three connected firms with one chunk each and a gateable summary."""
    corpus = make_corpus(
        {
            "a1": "Avala Corp maintains a research arm in the north.",
            "b1": "Boreth Group operates coastal shipping lanes.",
            "h1": "Harbor Exchange links both firms for trade.",
        },
        summaries=[("a1", "Avala Corp and Boreth Group coordinate trade.")],
    )
    graph = make_graph(
        nodes=[
            ("ava", "Avala Corp", ("Avala",), ("a1",)),
            ("bor", "Boreth Group", ("Boreth",), ("b1",)),
            ("hub", "Harbor Exchange", (), ("h1",)),
        ],
        edges=[
            ("ava", "works_with", "bor", ("a1",)),
            ("bor", "allied_with", "hub", ("b1",)),
        ],
    )
    return graph, corpus


def test_criterion_01_walk_scores_match_dense_solve():
    """Power-iterated walk scores agree with a closed-form linear solve."""
    rng = np.random.default_rng(11)
    started = time.monotonic()
    worst = 0.0
    for _ in range(200):
        graph, node_ids = random_graph(rng, max_nodes=50)
        count = int(rng.integers(1, min(4, len(node_ids)) + 1))
        seeds = list(rng.choice(node_ids, size=count, replace=False))
        alpha = float(rng.choice([0.1, 0.15, 0.3, 0.5]))
        cfg = RetrieverConfig(alpha=alpha, ppr_epsilon=1e-13, ppr_max_iters=1000)
        scores = ppr_scores(graph, seeds, cfg)
        expected = dense_walk_reference(graph, seeds, cfg)
        worst = max(worst, max(abs(scores[n] - expected[n]) for n in node_ids))
    elapsed = time.monotonic() - started
    assert worst <= 1e-8, f"worst deviation {worst}"
    assert elapsed < 10.0, f"took {elapsed:.2f}s"


def test_criterion_02_walk_mass_conserved_every_iteration():
    """Score mass stays a probability distribution at every step."""
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(25):
        graph, node_ids = random_graph(rng, max_nodes=30)
        count = int(rng.integers(1, min(4, len(node_ids)) + 1))
        seeds = list(rng.choice(node_ids, size=count, replace=False))
        telemetry = Telemetry()
        ppr_scores(graph, seeds, RetrieverConfig(), telemetry=telemetry)
        assert telemetry.ppr_iteration_sums, "no iterations recorded"
        for total in telemetry.ppr_iteration_sums:
            assert total == pytest.approx(1.0, abs=1e-9)
            checked += 1
    assert checked > 0


def test_criterion_03_two_node_closed_form():
    """On a single edge with restart 0.5 the seed holds 2/3 of the mass."""
    graph = make_graph(nodes=["a", "b"], edges=[("a", "r", "b")])
    cfg = RetrieverConfig(alpha=0.5, ppr_epsilon=1e-12, ppr_max_iters=1000)
    scores = ppr_scores(graph, ["a"], cfg)
    assert scores["a"] == pytest.approx(2 / 3, abs=1e-9)
    assert scores["b"] == pytest.approx(1 / 3, abs=1e-9)


def test_criterion_04_neighborhoods_match_shortest_paths():
    """k-hop sets and bridge sets agree with Floyd-Warshall distances."""
    rng = np.random.default_rng(23)
    for _ in range(100):
        graph, node_ids = random_graph(rng, max_nodes=40)
        if len(node_ids) < 2:
            continue
        ids, index, dist = floyd_warshall(graph)
        count = int(rng.integers(2, min(4, len(node_ids)) + 1))
        seeds = list(dict.fromkeys(rng.choice(node_ids, size=count, replace=False)))
        for k in (2, 3):
            start = seeds[0]
            expected_hop = {v for v in node_ids if dist[index[start], index[v]] <= k}
            assert khop_set(graph, start, k) == expected_hop
            expected_bridges = {
                v
                for v in node_ids
                if v not in seeds
                and sum(1 for s in set(seeds) if dist[index[s], index[v]] <= k) >= 2
            }
            assert find_bridges(graph, seeds, k) == expected_bridges


def test_criterion_05_budget_bounds_the_retry_ladder():
    """A never-satisfied judge and failing validators burn exactly the budget."""
    graph, corpus = control_world()
    suite = dataclasses.replace(
        OracleSuite.mock(graph),
        judge=ScriptedSufficiencyJudge("never"),
        validator_rel=ScriptedValidator(False),
        validator_grd=ScriptedValidator(False),
        validator_ans=ScriptedValidator(False),
    )
    engine = Engine(
        graph=graph,
        corpus=corpus,
        suite=suite,
        gate_cfg=GateConfig(tau_g=0.0),
        budget=ControllerBudget(i_max=2),
    )
    outcome = engine.answer("How do Avala and Boreth coordinate?")
    assert outcome.status is OutcomeStatus.FAIL
    assert len(outcome.trace) == 3
    assert all(record.terminated_at == "global" for record in outcome.trace)
    assert all(record.failure_type is FailureType.REL for record in outcome.trace)
    assert outcome.telemetry.stage_local == 3
    assert outcome.telemetry.stage_bridge == 3
    assert outcome.telemetry.stage_global == 3
    assert outcome.telemetry.ppr_calls == 3


def test_criterion_06_declined_gate_consults_nothing_downstream():
    """When the gate declines, only the embedder has been called."""
    graph, corpus = control_world()
    engine = Engine(
        graph=graph,
        corpus=corpus,
        suite=OracleSuite.mock(graph),
        gate_cfg=GateConfig(tau_g=0.999999),
    )
    outcome = engine.answer("How do Avala and Boreth coordinate?")
    assert outcome.status is OutcomeStatus.ABSTAIN
    assert outcome.trace == []
    assert outcome.answer is None
    assert outcome.cost.calls("mock-embedder") == 2
    assert outcome.cost.total_calls() == outcome.cost.calls("mock-embedder")
    assert outcome.telemetry.stage_local == 0
    assert outcome.telemetry.stage_bridge == 0
    assert outcome.telemetry.stage_global == 0
    assert outcome.telemetry.ppr_calls == 0


def test_criterion_07_verification_truth_table():
    """All eight validator combinations: first failure wins, rest unevaluated."""
    graph, _ = control_world()
    base = OracleSuite.mock(graph)
    table = [
        # rel, grd, ans -> passed, failure, bits, (grd calls, ans calls)
        (False, False, False, False, FailureType.REL, (False, None, None), 0, 0),
        (False, False, True, False, FailureType.REL, (False, None, None), 0, 0),
        (False, True, False, False, FailureType.REL, (False, None, None), 0, 0),
        (False, True, True, False, FailureType.REL, (False, None, None), 0, 0),
        (True, False, False, False, FailureType.GRD, (True, False, None), 1, 0),
        (True, False, True, False, FailureType.GRD, (True, False, None), 1, 0),
        (True, True, False, False, FailureType.ANS, (True, True, False), 1, 1),
        (True, True, True, True, None, (True, True, True), 1, 1),
    ]
    for rel, grd, ans, passed, failure, bits, grd_calls, ans_calls in table:
        suite = dataclasses.replace(
            base,
            validator_rel=ScriptedValidator(rel, name="v-rel"),
            validator_grd=ScriptedValidator(grd, name="v-grd"),
            validator_ans=ScriptedValidator(ans, name="v-ans"),
        )
        counters = CostCounters()
        result = triple_check("q", "a", ["evidence"], suite.metered(counters))
        assert result == (passed, failure, bits), f"row {(rel, grd, ans)}"
        assert counters.calls("v-rel") == 1
        assert counters.calls("v-grd") == grd_calls
        assert counters.calls("v-ans") == ans_calls


def test_criterion_08_stage_fractions_reflect_termination():
    """Benchmark stage fractions bucket answered queries by final stage."""
    graph, corpus = control_world()
    q_local_1 = "What does Avala Corp maintain?"
    q_local_2 = "What does Boreth Group operate?"
    q_bridge = "Do Avala and Boreth collaborate on trade?"
    q_global = "Where is Harbor Exchange located?"
    plan = {
        q_local_1: "local",
        q_local_2: "local",
        q_bridge: "bridge",
        q_global: "global",
    }
    suite = dataclasses.replace(
        OracleSuite.mock(graph),
        judge=ScriptedSufficiencyJudge(plan),
        validator_rel=ScriptedValidator(True),
        validator_grd=ScriptedValidator(True),
        validator_ans=ScriptedValidator(True),
    )
    engine = Engine(
        graph=graph,
        corpus=corpus,
        suite=suite,
        gate_cfg=GateConfig(tau_g=0.0),
        budget=ControllerBudget(i_max=2),
    )
    dataset = [
        QAInstance(qid="q1", question=q_local_1, answers=("x",), gold_chunks=("a1",)),
        QAInstance(qid="q2", question=q_local_2, answers=("x",), gold_chunks=("b1",)),
        QAInstance(qid="q3", question=q_bridge, answers=("x",), gold_chunks=("a1",)),
        QAInstance(qid="q4", question=q_global, answers=("x",), gold_chunks=("h1",)),
    ]
    report = run_benchmark(dataset, engine)
    assert all(record.status == "answered" for record in report.records)
    fractions = report.aggregates()["stage_fractions"]
    assert fractions["local"] == pytest.approx(0.5)
    assert fractions["bridge"] == pytest.approx(0.25)
    assert fractions["global"] == pytest.approx(0.25)
    assert fractions["failed"] == pytest.approx(0.0)


def test_criterion_09_graph_deletion_degrades_gracefully(tmp_path):
    """Under node deletion the full engine beats the graph-only baseline and
    the text-only baseline does not move."""
    cfg = load_config(fixture_config(tmp_path, "stress"))
    engine = build_engine(cfg)
    dataset = load_dataset(cfg.dataset_path, engine.corpus)
    started = time.monotonic()
    report = stress_sweep(
        dataset, engine, StressSpec(fractions=(0.0, 0.1, 0.2, 0.4), rng_seed=7)
    )
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"sweep took {elapsed:.2f}s"

    full = report.recall_curve("a2rag", k=5)
    graph_only = report.recall_curve("graph_only", k=5)
    text_only = report.recall_curve("text_only", k=5)
    assert text_only == [text_only[0]] * 4, "text baseline shifted under deletion"
    assert full[0] == pytest.approx(1.0)
    assert all(f >= g for f, g in zip(full, graph_only))
    assert full[3] >= graph_only[3] + 0.1, f"margin too small: {full[3]} vs {graph_only[3]}"


def test_criterion_10_relation_seeds_carry_recall(tmp_path):
    """Dropping relation seeds collapses recall on relation-worded queries."""
    cfg = load_config(fixture_config(tmp_path, "ablation"))
    engine = build_engine(cfg)
    dataset = load_dataset(cfg.dataset_path, engine.corpus)
    full = run_benchmark(dataset, engine).aggregates()["recall_at_2"]
    node_only = run_benchmark(dataset, engine, ablate_relation_seeds=True).aggregates()[
        "recall_at_2"
    ]
    assert full == pytest.approx(1.0)
    assert node_only == pytest.approx(0.0)
    assert full > node_only


def test_criterion_11_metric_hand_computations():
    """Ten hand-checked metric values, pinned exactly."""
    cases = [
        (exact_match("Barack Obama", ["barack obama!"]), 1.0),
        (exact_match("the answer", ["answer"]), 1.0),
        (exact_match("obama", ["barack obama"]), 0.0),
        (exact_match(None, ["x"]), 0.0),
        (exact_match("A B", ["a c", "a b"]), 1.0),
        (token_f1("obama", ["barack obama"]), 2 / 3),
        (token_f1("barack hussein obama", ["barack obama"]), 0.8),
        (token_f1("x y", ["a b"]), 0.0),
        (recall_at_k(["c1", "c2", "c3"], ["c2", "c9"], 2), 0.5),
        (recall_at_k(["c1", "c1", "c2"], ["c2"], 2), 1.0),
    ]
    assert len(cases) == 10
    for position, (got, expected) in enumerate(cases, start=1):
        assert got == pytest.approx(expected), f"case {position}: {got} != {expected}"


def test_criterion_12_benchmark_reports_are_deterministic(tmp_path, capsys):
    """Two offline benchmark runs emit byte-identical JSON with null timing."""
    config = fixture_config(tmp_path, "smoke")
    assert main(["--config", str(config), "bench", "--json"]) == 0
    first = capsys.readouterr().out
    assert main(["--config", str(config), "bench", "--json"]) == 0
    second = capsys.readouterr().out
    assert first == second
    document = json.loads(first)
    assert document["aggregates"]["mean_latency_s"] is None
    assert document["aggregates"]["p95_latency_s"] is None
    assert all(record["latency_s"] is None for record in document["records"])

    cfg = load_config(config)
    report_a = run_benchmark(load_dataset(cfg.dataset_path, build_engine(cfg).corpus), build_engine(cfg))
    report_b = run_benchmark(load_dataset(cfg.dataset_path, build_engine(cfg).corpus), build_engine(cfg))
    assert report_a.to_json() == report_b.to_json()


def test_criterion_13_review_appends_to_a_new_graph_version(tmp_path, capsys):
    """Approving proposals writes original rows plus exactly the approved
    edges to a fresh version file and never touches the original."""
    root = FIXTURES / "smoke"
    for name in ("corpus.jsonl", "summaries.jsonl", "graph.jsonl", "dataset.jsonl"):
        (tmp_path / name).write_text((root / name).read_text())
    config = tmp_path / "config.json"
    config.write_text((root / "config.json").read_text())
    graph_path = tmp_path / "graph.jsonl"
    before_hash = hashlib.sha256(graph_path.read_bytes()).hexdigest()
    original_lines = graph_path.read_text().splitlines()

    proposals = tmp_path / "proposals.jsonl"
    proposals.write_text(
        json.dumps(
            {
                "subject": "Avala Corp",
                "relation": "supplies",
                "object": "Tarn Initiative",
                "source_chunk_id": "s1",
                "query": "Who supplies the Tarn Initiative?",
            }
        )
        + "\n"
    )
    assert main(["--config", str(config), "review", str(proposals), "--approve-all"]) == 0
    capsys.readouterr()

    assert hashlib.sha256(graph_path.read_bytes()).hexdigest() == before_hash
    versioned = tmp_path / "graph.v2.jsonl"
    assert versioned.is_file()
    new_lines = versioned.read_text().splitlines()
    assert new_lines[: len(original_lines)] == original_lines
    appended = [json.loads(line) for line in new_lines[len(original_lines):]]
    assert appended == [
        {
            "type": "edge",
            "source": "avala",
            "relation": "supplies",
            "target": "tarn",
            "chunks": ["s1"],
        }
    ]
    corpus = load_corpus(tmp_path / "corpus.jsonl")
    graph = load_graph(versioned, corpus)
    assert ("avala", "supplies", "tarn") in {edge.key for edge in graph.edges}
    decided = tmp_path / "proposals.decided.jsonl"
    assert json.loads(decided.read_text().splitlines()[0])["decision"] == "approved"
