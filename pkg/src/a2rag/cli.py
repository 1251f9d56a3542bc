"""Command line interface.

Subcommands: ``query`` answers one question, ``bench`` scores a dataset,
``stress`` sweeps graph degradation, ``review`` walks proposed graph edits
past a human, ``validate-config`` checks a config and its data files.

Exit codes form a stable contract: 0 for success (for ``query``, a
verified answer), 1 for configuration or data errors, 3 when the gate
abstains, 4 when verification fails. ``--json`` makes every subcommand
print a single JSON document on stdout.

The review flow never rewrites an existing graph file. Approved proposals
produce the next unused ``<name>.v<N>.jsonl`` version alongside the
original, and every decision is recorded in a ``*.decided.jsonl`` sidecar.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import bench as benchmod
from .config import AppConfig, build_engine, load_config
from .controller import Engine, OutcomeStatus, propose_kb_updates
from .errors import A2RagError, DatasetError, GraphLoadError
from .kg import load_graph
from .oracles import TripleCandidate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ABSTAIN = 3
EXIT_FAIL = 4

_STATUS_EXIT = {
    OutcomeStatus.ANSWERED: EXIT_OK,
    OutcomeStatus.ABSTAIN: EXIT_ABSTAIN,
    OutcomeStatus.FAIL: EXIT_FAIL,
}

_PROPOSAL_FIELDS = ("subject", "relation", "object", "source_chunk_id")


def _emit(document: Mapping, as_json: bool, human_lines: Sequence[str]) -> None:
    if as_json:
        print(json.dumps(document, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def _load_engine(args: argparse.Namespace) -> tuple[AppConfig, Engine]:
    cfg = load_config(args.config)
    return cfg, build_engine(cfg)


# --------------------------------------------------------------------------
# query
# --------------------------------------------------------------------------


def cmd_query(args: argparse.Namespace) -> int:
    cfg, engine = _load_engine(args)
    outcome = engine.answer(args.question, ablate_relation_seeds=args.ablate_relations)
    include_timing = not engine.suite.deterministic
    document = outcome.to_dict(include_timing=include_timing)

    lines = [f"status: {outcome.status.value}"]
    if outcome.answer is not None:
        lines.append(f"answer: {outcome.answer}")
    if outcome.unverified_answer is not None:
        lines.append(f"unverified answer: {outcome.unverified_answer}")
    if outcome.error:
        lines.append(f"error: {outcome.error}")
    if outcome.trace:
        last = outcome.trace[-1]
        bits = ", ".join(
            f"{name}={'-' if bit is None else ('1' if bit else '0')}"
            for name, bit in zip(("rel", "grd", "ans"), last.validator_bits)
        )
        lines.append(f"stage: {last.terminated_at}  iterations: {len(outcome.trace)}")
        lines.append(f"validators: {bits}")
    if outcome.evidence:
        lines.append("evidence chunks: " + ", ".join(outcome.evidence))
    lines.append(
        "cost: {calls} oracle calls, {pt} prompt tokens, {ct} completion tokens".format(
            calls=outcome.cost.total_calls(),
            pt=outcome.cost.prompt_tokens,
            ct=outcome.cost.completion_tokens,
        )
    )

    if args.propose_out and outcome.status is OutcomeStatus.ANSWERED:
        proposals = propose_kb_updates(
            outcome.evidence, engine.corpus, engine.suite.triple_extractor
        )
        rows = [
            {
                "subject": p.subject,
                "relation": p.relation,
                "object": p.object,
                "source_chunk_id": p.source_chunk_id,
                "query": args.question,
            }
            for p in proposals
        ]
        out_path = Path(args.propose_out)
        with out_path.open("w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(row, sort_keys=True) + "\n")
        document["proposals_written"] = len(rows)
        lines.append(f"wrote {len(rows)} proposals to {out_path}")

    _emit(document, args.json, lines)
    return _STATUS_EXIT[outcome.status]


# --------------------------------------------------------------------------
# bench / stress
# --------------------------------------------------------------------------


def _load_dataset_for(cfg: AppConfig, engine: Engine, override: str | None):
    path = Path(override) if override else cfg.dataset_path
    if path is None:
        raise DatasetError("no dataset: config has no paths.dataset and --dataset not given")
    return benchmod.load_dataset(path, engine.corpus)


def cmd_bench(args: argparse.Namespace) -> int:
    cfg, engine = _load_engine(args)
    dataset = _load_dataset_for(cfg, engine, args.dataset)
    report = benchmod.run_benchmark(
        dataset,
        engine,
        ablate_relation_seeds=args.ablate_relations,
        map_back=not args.no_map_back,
        workers=args.workers,
    )
    document = report.to_dict()
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")

    agg = document["aggregates"]
    fractions = agg["stage_fractions"]

    def fmt(value) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    lines = [
        f"instances: {document['size']}",
        f"em: {fmt(agg['em'])}  f1: {fmt(agg['f1'])}",
        f"recall@2: {fmt(agg['recall_at_2'])}  recall@5: {fmt(agg['recall_at_5'])}",
        "stage fractions: "
        + "  ".join(f"{name}={fmt(fractions[name])}" for name in ("local", "bridge", "global", "failed")),
        f"mean oracle calls: {fmt(agg['mean_oracle_calls'])}",
    ]
    if agg["mean_latency_s"] is not None:
        lines.append(
            f"latency: mean {agg['mean_latency_s']:.3f}s  p95 {agg['p95_latency_s']:.3f}s"
        )
    if args.out:
        lines.append(f"report written to {args.out}")
    _emit(document, args.json, lines)
    return EXIT_OK


def _parse_fractions(raw: str) -> tuple[float, ...]:
    try:
        fractions = tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise DatasetError(f"--fractions must be comma-separated numbers: {raw!r}") from exc
    if not fractions:
        raise DatasetError("--fractions must name at least one fraction")
    return fractions


def cmd_stress(args: argparse.Namespace) -> int:
    cfg, engine = _load_engine(args)
    dataset = _load_dataset_for(cfg, engine, args.dataset)
    strategies = tuple(part for part in args.strategies.split(",") if part.strip())
    try:
        spec = benchmod.StressSpec(
            fractions=_parse_fractions(args.fractions),
            strategies=strategies,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    progress = None if args.json else lambda note: print(f"running {note}")
    report = benchmod.stress_sweep(dataset, engine, spec, progress=progress)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    lines = [benchmod.summarize_stress(report)]
    if args.out:
        lines.append(f"report written to {args.out}")
    _emit(report.to_dict(), args.json, lines)
    return EXIT_OK


# --------------------------------------------------------------------------
# review
# --------------------------------------------------------------------------


@dataclass
class ReviewItem:
    """One proposed edge on its way past the reviewer."""

    proposal: TripleCandidate
    query: str | None
    decision: str = "pending"
    reason: str | None = None

    def to_row(self) -> dict:
        return {
            "subject": self.proposal.subject,
            "relation": self.proposal.relation,
            "object": self.proposal.object,
            "source_chunk_id": self.proposal.source_chunk_id,
            "query": self.query,
            "decision": self.decision,
            "reason": self.reason,
        }


def load_proposals(path: str | Path) -> list[ReviewItem]:
    allowed = set(_PROPOSAL_FIELDS) | {"query"}
    items = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(row, Mapping):
            raise DatasetError(f"{path}:{line_no}: each proposal must be an object")
        unknown = set(row) - allowed
        if unknown:
            raise DatasetError(f"{path}:{line_no}: unknown fields {sorted(unknown)}")
        for name in _PROPOSAL_FIELDS:
            if not isinstance(row.get(name), str) or not row[name]:
                raise DatasetError(f"{path}:{line_no}: {name!r} must be a non-empty string")
        items.append(
            ReviewItem(
                proposal=TripleCandidate(
                    subject=row["subject"],
                    relation=row["relation"],
                    object=row["object"],
                    source_chunk_id=row["source_chunk_id"],
                ),
                query=row.get("query"),
            )
        )
    return items


_SLUG_RE = re.compile(r"[^a-z0-9]+")
_VERSION_STEM_RE = re.compile(r"^(?P<base>.+?)\.v(?P<num>\d+)$")


def next_graph_version(path: Path) -> Path:
    """First unused ``<base>.v<N><suffix>`` next to ``path``, starting at v2."""
    match = _VERSION_STEM_RE.match(path.stem)
    if match:
        base = match.group("base")
        number = int(match.group("num")) + 1
    else:
        base = path.stem
        number = 2
    while True:
        candidate = path.with_name(f"{base}.v{number}{path.suffix}")
        if not candidate.exists():
            return candidate
        number += 1


class _NodeResolver:
    """Maps entity names to node ids, creating records for unknown names."""

    def __init__(self, graph) -> None:
        self._by_name: dict[str, str] = {}
        self._taken = set(graph.nodes)
        for node in graph.nodes.values():
            for surface in node.surface_forms():
                self._by_name.setdefault(surface.casefold(), node.node_id)
        self.created: dict[str, dict] = {}

    def resolve(self, name: str, source_chunk_id: str) -> str:
        key = name.casefold()
        if key in self._by_name:
            node_id = self._by_name[key]
            record = self.created.get(node_id)
            if record is not None and source_chunk_id not in record["chunks"]:
                record["chunks"].append(source_chunk_id)
            return node_id
        base = _SLUG_RE.sub("-", key).strip("-") or "node"
        node_id = base
        counter = 2
        while node_id in self._taken:
            node_id = f"{base}-{counter}"
            counter += 1
        self._taken.add(node_id)
        self._by_name[key] = node_id
        self.created[node_id] = {
            "type": "node",
            "node_id": node_id,
            "name": name,
            "aliases": [],
            "chunks": [source_chunk_id],
        }
        return node_id


def _decide_interactively(item: ReviewItem, index: int, total: int, corpus, prompt_out) -> str:
    p = item.proposal
    print(f"[{index}/{total}] ({p.subject}) -[{p.relation}]-> ({p.object})", file=prompt_out)
    text = corpus.chunk_text(p.source_chunk_id)
    print(f"    source {p.source_chunk_id}: {text[:200]}", file=prompt_out)
    if item.query:
        print(f"    from query: {item.query}", file=prompt_out)
    while True:
        print("    approve/reject/quit [a/r/q]? ", end="", file=prompt_out, flush=True)
        line = sys.stdin.readline()
        if not line:
            return "quit"
        choice = line.strip().casefold()
        if choice in ("a", "approve", "y", "yes"):
            return "approved"
        if choice in ("r", "reject", "n", "no"):
            return "rejected"
        if choice in ("q", "quit"):
            return "quit"


def cmd_review(args: argparse.Namespace) -> int:
    cfg, engine = _load_engine(args)
    items = load_proposals(args.proposals)
    prompt_out = sys.stderr if args.json else sys.stdout

    quit_early = False
    for index, item in enumerate(items, start=1):
        if item.proposal.source_chunk_id not in engine.corpus:
            item.decision = "rejected"
            item.reason = f"unknown source chunk {item.proposal.source_chunk_id!r}"
            continue
        if quit_early:
            continue
        if args.approve_all:
            item.decision = "approved"
        elif args.reject_all:
            item.decision = "rejected"
            item.reason = "rejected by --reject-all"
        else:
            verdict = _decide_interactively(item, index, len(items), engine.corpus, prompt_out)
            if verdict == "quit":
                quit_early = True
                continue
            item.decision = verdict
            if verdict == "rejected":
                item.reason = "rejected by reviewer"

    approved = [item for item in items if item.decision == "approved"]
    graph_out: Path | None = None
    if approved:
        resolver = _NodeResolver(engine.graph)
        edge_rows = []
        seen_edges = {edge.key for edge in engine.graph.edges}
        for item in approved:
            p = item.proposal
            source_id = resolver.resolve(p.subject, p.source_chunk_id)
            target_id = resolver.resolve(p.object, p.source_chunk_id)
            key = (source_id, p.relation, target_id)
            if key in seen_edges:
                item.reason = "edge already present; provenance merged"
            seen_edges.add(key)
            edge_rows.append(
                {
                    "type": "edge",
                    "source": source_id,
                    "relation": p.relation,
                    "target": target_id,
                    "chunks": [p.source_chunk_id],
                }
            )
        graph_out = next_graph_version(cfg.graph_path)
        original = cfg.graph_path.read_text(encoding="utf-8")
        if original and not original.endswith("\n"):
            original += "\n"
        new_rows = [json.dumps(row, sort_keys=True) for row in resolver.created.values()]
        new_rows.extend(json.dumps(row, sort_keys=True) for row in edge_rows)
        graph_out.write_text(original + "\n".join(new_rows) + "\n", encoding="utf-8")
        try:
            load_graph(graph_out, engine.corpus)
        except GraphLoadError:
            graph_out.unlink()
            raise

    decisions_out = Path(str(Path(args.proposals)).removesuffix(".jsonl") + ".decided.jsonl")
    with decisions_out.open("w", encoding="utf-8") as handle:
        for item in items:
            handle.write(json.dumps(item.to_row(), sort_keys=True) + "\n")

    counts = {
        "approved": sum(1 for i in items if i.decision == "approved"),
        "rejected": sum(1 for i in items if i.decision == "rejected"),
        "pending": sum(1 for i in items if i.decision == "pending"),
    }
    document = {
        "reviewed": len(items),
        **counts,
        "graph_out": str(graph_out) if graph_out else None,
        "decisions_out": str(decisions_out),
    }
    lines = [
        f"reviewed {len(items)} proposals: "
        f"{counts['approved']} approved, {counts['rejected']} rejected, "
        f"{counts['pending']} pending",
        f"decisions written to {decisions_out}",
    ]
    if graph_out:
        lines.append(f"new graph version: {graph_out}")
    else:
        lines.append("graph unchanged")
    _emit(document, args.json, lines)
    return EXIT_OK


# --------------------------------------------------------------------------
# validate-config
# --------------------------------------------------------------------------


def cmd_validate_config(args: argparse.Namespace) -> int:
    cfg, engine = _load_engine(args)
    dataset_size = None
    if cfg.dataset_path is not None:
        dataset_size = len(benchmod.load_dataset(cfg.dataset_path, engine.corpus))
    document = {
        "valid": True,
        "config": cfg.describe(),
        "counts": {
            "chunks": len(engine.corpus),
            "documents": len(engine.corpus.doc_ids()),
            "nodes": len(engine.graph.nodes),
            "edges": len(engine.graph.edges),
            "dataset": dataset_size,
        },
    }
    lines = [
        f"config ok: {args.config}",
        "corpus: {chunks} chunks in {documents} documents".format(**document["counts"]),
        "graph: {nodes} nodes, {edges} edges".format(**document["counts"]),
    ]
    if dataset_size is not None:
        lines.append(f"dataset: {dataset_size} instances")
    _emit(document, args.json, lines)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a2rag", description="Graph-grounded retrieval with verified answers."
    )
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress details to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    query = sub.add_parser("query", help="answer one question")
    query.add_argument("question")
    query.add_argument("--json", action="store_true")
    query.add_argument(
        "--ablate-relations", action="store_true", help="ignore relation mentions when seeding"
    )
    query.add_argument(
        "--propose-out", help="write proposed graph edits here after a verified answer"
    )
    query.set_defaults(func=cmd_query)

    bench = sub.add_parser("bench", help="evaluate a QA dataset")
    bench.add_argument("--dataset", help="override the config's dataset path")
    bench.add_argument("--json", action="store_true")
    bench.add_argument("--out", help="also write the JSON report to this file")
    bench.add_argument("--ablate-relations", action="store_true")
    bench.add_argument(
        "--no-map-back", action="store_true", help="skip mapping ranked nodes back to chunks"
    )
    bench.add_argument("--workers", type=int, default=1)
    bench.set_defaults(func=cmd_bench)

    stress = sub.add_parser("stress", help="benchmark under graph degradation")
    stress.add_argument("--dataset", help="override the config's dataset path")
    stress.add_argument("--fractions", default="0,0.1,0.2,0.4")
    stress.add_argument("--seed", type=int, default=7)
    stress.add_argument("--strategies", default=",".join(benchmod.STRATEGIES))
    stress.add_argument("--json", action="store_true")
    stress.add_argument("--out", help="also write the JSON report to this file")
    stress.set_defaults(func=cmd_stress)

    review = sub.add_parser("review", help="approve or reject proposed graph edits")
    review.add_argument("proposals", help="proposals JSONL file")
    mode = review.add_mutually_exclusive_group()
    mode.add_argument("--approve-all", action="store_true")
    mode.add_argument("--reject-all", action="store_true")
    review.add_argument("--json", action="store_true")
    review.set_defaults(func=cmd_review)

    validate = sub.add_parser("validate-config", help="check the config and its data files")
    validate.add_argument("--json", action="store_true")
    validate.set_defaults(func=cmd_validate_config)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except A2RagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
