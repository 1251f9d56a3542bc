"""Regenerate the shipped fixtures under fixtures/.

Three self-contained corpora, each with a graph, a QA dataset, and a
ready-to-run config:

- smoke: a handful of companies and projects; fast CLI and pipeline demos.
- stress: ten paired-company questions routed through five shared venture
  hubs, padded with inert ledger chunks; built so graph degradation bites
  the edge-provenance path long before the node-provenance path.
- ablation: companies with six noisy partner edges written before the one
  informative founder edge, so relation-filtered seeding visibly beats
  unfiltered seeding at small evidence cutoffs.

Deterministic by construction; run from the repository root:
    python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

NUMBER_WORDS = ["One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten"]
GREEK = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta", "Eta", "Theta", "Iota", "Kappa"]


def write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def write_config(directory: Path, **overrides) -> None:
    config = {
        "paths": {
            "corpus": "corpus.jsonl",
            "summaries": "summaries.jsonl",
            "graph": "graph.jsonl",
            "dataset": "dataset.jsonl",
        },
        "gate": {"tau_g": 0.0},
        "oracles": {"mode": "mock"},
    }
    for key, value in overrides.items():
        config.setdefault(key, {}).update(value)
    (directory / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def node(node_id: str, name: str, chunks: list[str], aliases: list[str] | None = None) -> dict:
    return {
        "type": "node",
        "node_id": node_id,
        "name": name,
        "aliases": aliases or [],
        "chunks": chunks,
    }


def edge(source: str, relation: str, target: str, chunks: list[str]) -> dict:
    return {
        "type": "edge",
        "source": source,
        "relation": relation,
        "target": target,
        "chunks": chunks,
    }


# --------------------------------------------------------------------------
# smoke
# --------------------------------------------------------------------------


def gen_smoke() -> None:
    directory = FIXTURES / "smoke"
    corpus = [
        {"chunk_id": "s1", "doc_id": "alpha", "text": "Avala Corp works closely with Boreth Group on shared infrastructure."},
        {"chunk_id": "s2", "doc_id": "alpha", "text": "The Senna Project was founded by Mira Holt."},
        {"chunk_id": "s3", "doc_id": "beta", "text": "Boreth Group operates in the energy sector."},
        {"chunk_id": "s4", "doc_id": "beta", "text": "Avala Corp and Boreth Group jointly run the Senna Project."},
        {"chunk_id": "s5", "doc_id": "gamma", "text": "Mira Holt previously led the Tarn Initiative."},
        {"chunk_id": "s6", "doc_id": "gamma", "text": "Observers say the Tarn Initiative works with Boreth Group on tidal power generation surveys."},
    ]
    summaries = [
        {"doc_id": "alpha", "summary": "Avala Corp, Boreth Group and the founding of the Senna Project."},
        {"doc_id": "beta", "summary": "Boreth Group operations and the Senna Project partnership."},
        {"doc_id": "gamma", "summary": "Mira Holt and the Tarn Initiative."},
    ]
    graph = [
        node("avala", "Avala Corp", ["s1", "s4"], aliases=["Avala"]),
        node("boreth", "Boreth Group", ["s1", "s3", "s4"], aliases=["Boreth"]),
        node("senna", "Senna Project", ["s2", "s4"]),
        node("mira", "Mira Holt", ["s2", "s5"]),
        node("tarn", "Tarn Initiative", ["s5", "s6"]),
        edge("avala", "works_with", "boreth", ["s1"]),
        edge("avala", "works_on", "senna", ["s4"]),
        edge("boreth", "works_on", "senna", ["s4"]),
        edge("senna", "founded_by", "mira", ["s2"]),
        edge("tarn", "led_by", "mira", ["s5"]),
    ]
    dataset = [
        {"qid": "sm-1", "question": "Who founded the Senna Project?", "answers": ["Mira Holt"], "gold_chunks": ["s2"]},
        {"qid": "sm-2", "question": "Which group works with Avala Corp?", "answers": ["Boreth Group"], "gold_chunks": ["s1"]},
        {"qid": "sm-3", "question": "What topic did the Tarn Initiative research or study?", "answers": ["tidal power generation"], "gold_chunks": ["s6"]},
    ]
    write_jsonl(directory / "corpus.jsonl", corpus)
    write_jsonl(directory / "summaries.jsonl", summaries)
    write_jsonl(directory / "graph.jsonl", graph)
    write_jsonl(directory / "dataset.jsonl", dataset)
    write_config(directory)


# --------------------------------------------------------------------------
# stress
# --------------------------------------------------------------------------


def gen_stress() -> None:
    directory = FIXTURES / "stress"
    corpus = []
    graph = []
    dataset = []

    # Ten instance triangles: Avala i and Boreth i around their own venture
    # hub. Only the works_with edge cites the gold chunk; the allied_with
    # edges are uncited, so losing a single node severs the edge-provenance
    # path while all three node records still carry the gold chunk.
    for i in range(1, 11):
        word = NUMBER_WORDS[i - 1]
        hub = GREEK[i - 1]
        gold = f"gold-{i:02d}"
        corpus.append(
            {
                "chunk_id": gold,
                "doc_id": "register",
                "text": (
                    f"Avala {word} and Boreth {word} run a joint venture "
                    f"through Venture {hub}, linking their operations."
                ),
            }
        )
        dataset.append(
            {
                "qid": f"st-{i:02d}",
                "question": f"Which joint venture links Avala {word} and Boreth {word}?",
                "answers": [f"Venture {hub}"],
                "gold_chunks": [gold],
            }
        )
    for n in range(11, 61):
        batch = (n - 11) // 10 + 1
        corpus.append(
            {
                "chunk_id": f"pad-{n:02d}",
                "doc_id": f"archive-{batch}",
                "text": (
                    f"Ledger entry {n} records a routine quarterly filing "
                    f"for batch {batch} with no partners named."
                ),
            }
        )
    summaries = [
        {"doc_id": "register", "summary": "Partnership register for Avala and Boreth companies and their shared ventures."}
    ]
    for batch in range(1, 6):
        summaries.append(
            {"doc_id": f"archive-{batch}", "summary": f"Routine ledger entries, batch {batch}."}
        )

    for i in range(1, 11):
        word = NUMBER_WORDS[i - 1]
        gold = f"gold-{i:02d}"
        graph.append(node(f"a{i:02d}", f"Avala {word}", [gold]))
        graph.append(node(f"b{i:02d}", f"Boreth {word}", [gold]))
    for i in range(1, 11):
        graph.append(node(f"h{i:02d}", f"Venture {GREEK[i - 1]}", [f"gold-{i:02d}"]))
    for k in range(1, 11):
        graph.append(node(f"f{k:02d}", f"Ledger Entry {NUMBER_WORDS[k - 1]}", []))

    for i in range(1, 11):
        gold = f"gold-{i:02d}"
        graph.append(edge(f"a{i:02d}", "works_with", f"h{i:02d}", [gold]))
        graph.append(edge(f"b{i:02d}", "allied_with", f"h{i:02d}", []))
        graph.append(edge(f"a{i:02d}", "allied_with", f"b{i:02d}", []))
    for k in range(1, 10):
        graph.append(edge(f"f{k:02d}", "adjacent_to", f"f{k + 1:02d}", []))

    write_jsonl(directory / "corpus.jsonl", corpus)
    write_jsonl(directory / "summaries.jsonl", summaries)
    write_jsonl(directory / "graph.jsonl", graph)
    write_jsonl(directory / "dataset.jsonl", dataset)
    # The high judge bar plus the links/linking wording gap keeps every
    # retrieval escalating to the global stage.
    write_config(directory, oracles={"mode": "mock", "judge_min_coverage": 0.95})


# --------------------------------------------------------------------------
# ablation
# --------------------------------------------------------------------------


ABLATION_COMPANIES = [
    ("quell", "Quell Industries", "mira-voss", "Mira Voss", 2311),
    ("rostra", "Rostra Labs", "odin-clay", "Odin Clay", 2298),
    ("sable", "Sable Works", "pia-strand", "Pia Strand", 2305),
    ("tessen", "Tessen Group", "ruben-tal", "Ruben Tal", 2317),
]

ABLATION_PARTNERS = [
    ("dray", "Dray Partners"),
    ("efra", "Efra Union"),
    ("grent", "Grent Holdings"),
    ("itel", "Itel Bureau"),
    ("jorum", "Jorum Trade"),
    ("koval", "Koval Syndicate"),
]


def gen_ablation() -> None:
    directory = FIXTURES / "ablation"
    corpus = []
    summaries = [
        {"doc_id": "founders", "summary": "Founding records for Quell Industries, Rostra Labs, Sable Works and Tessen Group."}
    ]
    nodes = []
    edges = []
    dataset = []

    partner_chunks: dict[str, list[str]] = {pid: [] for pid, _ in ABLATION_PARTNERS}
    for cid, cname, fid, fname, year in ABLATION_COMPANIES:
        doc = f"news-{cid}"
        summaries.append({"doc_id": doc, "summary": f"Expo coverage mentioning {cname}."})
        noise_ids = []
        for index, (pid, pname) in enumerate(ABLATION_PARTNERS, start=1):
            chunk_id = f"noise-{cid}-{index}"
            noise_ids.append(chunk_id)
            partner_chunks[pid].append(chunk_id)
            corpus.append(
                {
                    "chunk_id": chunk_id,
                    "doc_id": doc,
                    "text": f"{cname} was mentioned with {pname} at the spring expo.",
                }
            )
        gold = f"gold-{cid}"
        corpus.append(
            {
                "chunk_id": gold,
                "doc_id": "founders",
                "text": f"{cname} was founded by {fname} in {year}.",
            }
        )
        nodes.append(node(cid, cname, [gold, noise_ids[0]]))
        nodes.append(node(fid, fname, [gold]))
        # Distractor edges go first on purpose: an unfiltered local stage
        # admits them (and their chunks) ahead of the founder edge.
        for index, (pid, _) in enumerate(ABLATION_PARTNERS, start=1):
            edges.append(edge(cid, "mentioned_with", pid, [f"noise-{cid}-{index}"]))
        edges.append(edge(cid, "founded_by", fid, [gold]))
        dataset.append(
            {
                "qid": f"ab-{cid}",
                "question": f"Who was {cname} founded by?",
                "answers": [fname],
                "gold_chunks": [gold],
            }
        )

    for pid, pname in ABLATION_PARTNERS:
        nodes.append(node(pid, pname, partner_chunks[pid]))

    write_jsonl(directory / "corpus.jsonl", corpus)
    write_jsonl(directory / "summaries.jsonl", summaries)
    write_jsonl(directory / "graph.jsonl", nodes + edges)
    write_jsonl(directory / "dataset.jsonl", dataset)
    write_config(directory)


def main() -> None:
    gen_smoke()
    gen_stress()
    gen_ablation()
    for name in ("smoke", "stress", "ablation"):
        directory = FIXTURES / name
        counts = {
            path.name: sum(1 for line in path.read_text().splitlines() if line.strip())
            for path in sorted(directory.glob("*.jsonl"))
        }
        print(name, counts)


if __name__ == "__main__":
    main()
