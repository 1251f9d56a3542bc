"""Converters from public multi-hop QA dumps to this package's file formats.

Two input shapes are supported, both built around per-question context
paragraphs and sentence-level supporting facts:

- ``hotpotqa``: rows with ``_id``, ``question``, ``answer``,
  ``context`` as ``[title, [sentence, ...]]`` pairs and
  ``supporting_facts`` as ``[title, sentence_index]`` pairs.
- ``2wiki``: the same shape, plus ``evidences`` triples
  (``[subject, relation, object]``) which are additionally converted
  into graph rows.

Each context paragraph becomes one document; each sentence becomes one
chunk (``<doc>-s<idx>``), so supporting facts map directly onto gold chunk
ids. Document summaries take the paragraph's first sentence. Converted
files are JSONL, ready for the corpus, summary, graph, and dataset loaders.

Run as a script: ``python -m a2rag.adapters hotpotqa in.json outdir/``.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DatasetError

logger = logging.getLogger(__name__)

_SLUG_RE = re.compile(r"[^a-z0-9]+")


def slugify(text: str) -> str:
    slug = _SLUG_RE.sub("-", text.casefold()).strip("-")
    return slug or "untitled"


def _load_rows(path: str | Path) -> list[Mapping]:
    """Read either a JSON array file or JSONL."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        rows = json.loads(text)
        if not isinstance(rows, list):
            raise DatasetError(f"{path}: expected a JSON array")
        return rows
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
    return rows


class _DocRegistry:
    """Assigns each distinct paragraph a stable doc id, slug collisions included."""

    def __init__(self) -> None:
        self.docs: dict[str, tuple[str, list[str]]] = {}
        self._by_title: dict[str, str] = {}

    def add(self, title: str, sentences: Sequence[str]) -> str:
        if title in self._by_title:
            doc_id = self._by_title[title]
            known = self.docs[doc_id][1]
            if list(sentences) != known and len(sentences) > len(known):
                self.docs[doc_id] = (title, list(sentences))
            return doc_id
        base = slugify(title)
        doc_id = base
        counter = 2
        while doc_id in self.docs:
            doc_id = f"{base}-{counter}"
            counter += 1
        self.docs[doc_id] = (title, list(sentences))
        self._by_title[title] = doc_id
        return doc_id

    def chunk_id(self, title: str, sentence_index: int) -> str | None:
        doc_id = self._by_title.get(title)
        if doc_id is None:
            return None
        if not 0 <= sentence_index < len(self.docs[doc_id][1]):
            return None
        return f"{doc_id}-s{sentence_index}"


def _convert(rows: Iterable[Mapping], *, with_evidence_graph: bool) -> dict[str, list[dict]]:
    registry = _DocRegistry()
    dataset_rows: list[dict] = []
    graph_nodes: dict[str, dict] = {}
    graph_edges: dict[tuple[str, str, str], set[str]] = {}
    seen_qids: set[str] = set()

    for row in rows:
        qid = row.get("_id") or row.get("id")
        question = row.get("question")
        answer = row.get("answer")
        if not isinstance(qid, str) or not isinstance(question, str) or not isinstance(answer, str):
            raise DatasetError("each row needs string '_id', 'question' and 'answer' fields")
        if qid in seen_qids:
            logger.warning("skipping duplicate question id %r", qid)
            continue
        seen_qids.add(qid)

        for item in row.get("context", []):
            if not isinstance(item, Sequence) or len(item) != 2:
                raise DatasetError(f"question {qid!r}: malformed context entry")
            title, sentences = item
            if not isinstance(title, str) or not isinstance(sentences, list):
                raise DatasetError(f"question {qid!r}: malformed context entry")
            registry.add(title, [str(s) for s in sentences])

        gold_chunks = []
        for fact in row.get("supporting_facts", []):
            if not isinstance(fact, Sequence) or len(fact) != 2:
                raise DatasetError(f"question {qid!r}: malformed supporting fact")
            title, index = fact
            chunk_id = registry.chunk_id(str(title), int(index))
            if chunk_id is None:
                logger.warning(
                    "question %r: supporting fact (%r, %s) has no matching chunk", qid, title, index
                )
                continue
            gold_chunks.append(chunk_id)

        dataset_rows.append(
            {
                "qid": qid,
                "question": question,
                "answers": [answer],
                "gold_chunks": list(dict.fromkeys(gold_chunks)),
            }
        )

        if with_evidence_graph:
            for triple in row.get("evidences", []):
                if not isinstance(triple, Sequence) or len(triple) != 3:
                    raise DatasetError(f"question {qid!r}: malformed evidence triple")
                subject, relation, obj = (str(part) for part in triple)
                for name in (subject, obj):
                    node_id = slugify(name)
                    graph_nodes.setdefault(
                        node_id,
                        {
                            "type": "node",
                            "node_id": node_id,
                            "name": name,
                            "aliases": [],
                            "chunks": [],
                        },
                    )
                label = slugify(relation).replace("-", "_")
                key = (slugify(subject), label, slugify(obj))
                graph_edges.setdefault(key, set()).update(gold_chunks)

    corpus_rows = []
    summary_rows = []
    for doc_id, (title, sentences) in sorted(registry.docs.items()):
        for index, sentence in enumerate(sentences):
            corpus_rows.append(
                {"chunk_id": f"{doc_id}-s{index}", "doc_id": doc_id, "text": sentence}
            )
        summary = sentences[0] if sentences else title
        summary_rows.append({"doc_id": doc_id, "summary": summary})

    out = {"corpus": corpus_rows, "summaries": summary_rows, "dataset": dataset_rows}
    if with_evidence_graph:
        graph_rows = [graph_nodes[node_id] for node_id in sorted(graph_nodes)]
        for (source, relation, target), provenance in sorted(graph_edges.items()):
            graph_rows.append(
                {
                    "type": "edge",
                    "source": source,
                    "relation": relation,
                    "target": target,
                    "chunks": sorted(provenance),
                }
            )
        out["graph"] = graph_rows
    return out


def convert_hotpotqa(rows: Iterable[Mapping]) -> dict[str, list[dict]]:
    """Corpus, summaries and dataset rows from distractor-setting data.

    No gold triples exist in this format, so no graph rows are produced;
    bootstrap a graph separately (for example via triple extraction over
    the converted corpus).
    """
    return _convert(rows, with_evidence_graph=False)


def convert_2wiki(rows: Iterable[Mapping]) -> dict[str, list[dict]]:
    """Like :func:`convert_hotpotqa`, plus graph rows from evidence triples.

    Edge provenance is approximated by the owning question's gold chunks,
    which is the finest attribution the format carries.
    """
    return _convert(rows, with_evidence_graph=True)


def write_jsonl(path: str | Path, rows: Sequence[Mapping]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m a2rag.adapters",
        description="Convert public multi-hop QA dumps to a2rag JSONL files.",
    )
    parser.add_argument("format", choices=["hotpotqa", "2wiki"])
    parser.add_argument("input", help="JSON array or JSONL file in the named format")
    parser.add_argument("outdir", help="directory for the converted JSONL files")
    parser.add_argument("--limit", type=int, default=None, help="convert only the first N rows")
    args = parser.parse_args(argv)

    converter = convert_hotpotqa if args.format == "hotpotqa" else convert_2wiki
    try:
        rows = _load_rows(args.input)
        if args.limit is not None:
            rows = rows[: args.limit]
        converted = converter(rows)
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, file_rows in converted.items():
        target = outdir / f"{name}.jsonl"
        write_jsonl(target, file_rows)
        print(f"wrote {len(file_rows):6d} rows to {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
