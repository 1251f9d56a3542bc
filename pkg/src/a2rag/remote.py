"""Remote oracle suite over an OpenAI-compatible HTTP API.

Every oracle slot can be served by a hosted model: embeddings through the
``/embeddings`` route, everything else through ``/chat/completions``.
Prompts live in editable text templates; transient failures (429, 5xx,
transport errors) are retried with exponential backoff, authentication
failures and malformed responses are surfaced as typed errors.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .errors import (
    OracleAuthError,
    OracleConfigError,
    OracleProtocolError,
    OracleTransportError,
)
from .oracles import OracleSuite, Sufficiency, TokenUsage, TripleCandidate

logger = logging.getLogger(__name__)

_ENV_VARS = ("A2RAG_API_BASE", "A2RAG_API_KEY", "A2RAG_CHAT_MODEL", "A2RAG_EMBED_MODEL")

PROMPT_NAMES = (
    "generator",
    "validator_rel",
    "validator_grd",
    "validator_ans",
    "judge",
    "rewriter",
    "mention_extractor",
    "triple_extractor",
)


@dataclass(frozen=True)
class RemoteEndpointConfig:
    """Connection parameters for the hosted API."""

    api_base: str
    api_key: str
    chat_model: str
    embed_model: str
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.5

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "RemoteEndpointConfig":
        env = os.environ if env is None else env
        missing = [name for name in _ENV_VARS if not env.get(name)]
        if missing:
            raise OracleConfigError(
                f"remote oracles need environment variables: {', '.join(missing)}"
            )
        return cls(
            api_base=env["A2RAG_API_BASE"].rstrip("/"),
            api_key=env["A2RAG_API_KEY"],
            chat_model=env["A2RAG_CHAT_MODEL"],
            embed_model=env["A2RAG_EMBED_MODEL"],
        )


def _parse_usage(data: Mapping) -> TokenUsage:
    usage = data.get("usage") or {}
    try:
        return TokenUsage(
            prompt=int(usage.get("prompt_tokens", 0)),
            completion=int(usage.get("completion_tokens", 0)),
        )
    except (TypeError, ValueError):
        return TokenUsage()


class RemoteClient:
    """Thin HTTP layer: POST, retry on transient failure, decode JSON."""

    def __init__(
        self,
        config: RemoteEndpointConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=config.api_base,
            headers={
                "Authorization": f"Bearer {config.api_key}",
                "Content-Type": "application/json",
            },
            timeout=config.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> Mapping:
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = self.config.backoff_base_s * (2 ** (attempt - 1))
                logger.debug("retrying %s in %.2fs (attempt %d)", path, delay, attempt + 1)
                self._sleep(delay)
            try:
                response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = OracleTransportError(f"request to {path} failed: {exc}")
                continue
            status = response.status_code
            if status in (401, 403):
                raise OracleAuthError(
                    f"authentication rejected for {path}", status_code=status
                )
            if status == 429 or status >= 500:
                last_error = OracleTransportError(
                    f"{path} returned {status}", status_code=status
                )
                continue
            if status >= 400:
                raise OracleTransportError(
                    f"{path} returned {status}: {response.text[:200]}", status_code=status
                )
            try:
                data = response.json()
            except ValueError as exc:
                raise OracleProtocolError(
                    f"{path} returned non-JSON body", body=response.text[:500]
                ) from exc
            if not isinstance(data, Mapping):
                raise OracleProtocolError(
                    f"{path} returned a non-object body", body=response.text[:500]
                )
            return data
        assert last_error is not None
        raise last_error

    def chat(self, system: str, user: str, *, temperature: float = 0.0) -> tuple[str, TokenUsage]:
        data = self._post(
            "/chat/completions",
            {
                "model": self.config.chat_model,
                "temperature": temperature,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
            },
        )
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise OracleProtocolError(
                "chat response missing choices[0].message.content",
                body=json.dumps(data)[:500],
            ) from exc
        if not isinstance(content, str):
            raise OracleProtocolError("chat message content is not a string")
        return content, _parse_usage(data)

    def embed(self, text: str) -> tuple[np.ndarray, TokenUsage]:
        data = self._post("/embeddings", {"model": self.config.embed_model, "input": text})
        try:
            raw = data["data"][0]["embedding"]
            vector = np.asarray(raw, dtype=np.float64)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise OracleProtocolError(
                "embedding response missing data[0].embedding",
                body=json.dumps(data)[:500],
            ) from exc
        if vector.ndim != 1 or vector.size == 0:
            raise OracleProtocolError("embedding must be a non-empty flat vector")
        norm = float(np.linalg.norm(vector))
        if norm > 0:
            vector = vector / norm
        return vector, _parse_usage(data)


class PromptLibrary:
    """Loads prompt templates, preferring an override directory over the
    packaged defaults."""

    def __init__(self, prompt_dir: str | Path | None = None) -> None:
        self._dir = Path(prompt_dir) if prompt_dir else None
        self._cache: dict[str, str] = {}

    def load(self, name: str) -> str:
        if name in self._cache:
            return self._cache[name]
        text: str | None = None
        if self._dir is not None:
            candidate = self._dir / f"{name}.txt"
            if candidate.is_file():
                text = candidate.read_text(encoding="utf-8")
        if text is None:
            try:
                text = (
                    resources.files("a2rag.prompts").joinpath(f"{name}.txt").read_text("utf-8")
                )
            except (FileNotFoundError, ModuleNotFoundError) as exc:
                raise OracleConfigError(f"no prompt template named {name!r}") from exc
        self._cache[name] = text
        return text


def _numbered(evidence_texts: Sequence[str]) -> str:
    if not evidence_texts:
        return "(no evidence)"
    return "\n".join(f"[{i + 1}] {text}" for i, text in enumerate(evidence_texts))


def _yes_no(content: str) -> bool:
    head = content.strip().split(None, 1)[0].strip(".,:;!").casefold() if content.strip() else ""
    if head == "yes":
        return True
    if head == "no":
        return False
    raise OracleProtocolError(f"expected yes/no verdict, got {content[:120]!r}")


def _json_payload(content: str):
    text = content.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        body = [line for line in lines[1:] if not line.startswith("```")]
        text = "\n".join(body).strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        start = text.find("{")
        end = text.rfind("}")
        alt_start = text.find("[")
        alt_end = text.rfind("]")
        if alt_start != -1 and (start == -1 or alt_start < start):
            start, end = alt_start, alt_end
        if start == -1 or end <= start:
            raise OracleProtocolError("no JSON object in model reply", body=content[:500])
        try:
            return json.loads(text[start : end + 1])
        except json.JSONDecodeError as exc:
            raise OracleProtocolError(
                "model reply is not valid JSON", body=content[:500]
            ) from exc


class RemoteEmbedder:
    name = "remote_embedder"

    def __init__(self, client: RemoteClient) -> None:
        self._client = client

    def embed(self, text: str) -> tuple[np.ndarray, TokenUsage]:
        return self._client.embed(text)


class RemoteGenerator:
    name = "remote_generator"

    def __init__(self, client: RemoteClient, prompts: PromptLibrary) -> None:
        self._client = client
        self._prompts = prompts

    def generate(self, query: str, evidence_texts: Sequence[str]) -> tuple[str, TokenUsage]:
        template = self._prompts.load("generator")
        content, usage = self._client.chat(
            template, f"Question: {query}\n\nEvidence:\n{_numbered(evidence_texts)}"
        )
        return content.strip(), usage


class RemoteValidator:
    """Yes/no check against one of the three validator prompts."""

    def __init__(self, client: RemoteClient, prompts: PromptLibrary, kind: str) -> None:
        if kind not in ("rel", "grd", "ans"):
            raise OracleConfigError(f"unknown validator kind {kind!r}")
        self._client = client
        self._prompts = prompts
        self._kind = kind
        self.name = f"remote_validator_{kind}"

    def validate(
        self, query: str, answer: str, evidence_texts: Sequence[str]
    ) -> tuple[bool, TokenUsage]:
        template = self._prompts.load(f"validator_{self._kind}")
        content, usage = self._client.chat(
            template,
            f"Question: {query}\nAnswer: {answer}\n\nEvidence:\n{_numbered(evidence_texts)}",
        )
        return _yes_no(content), usage


class RemoteSufficiencyJudge:
    name = "remote_judge"

    def __init__(self, client: RemoteClient, prompts: PromptLibrary) -> None:
        self._client = client
        self._prompts = prompts

    def judge(
        self, query: str, evidence_texts: Sequence[str], stage: str
    ) -> tuple[Sufficiency, TokenUsage]:
        template = self._prompts.load("judge")
        content, usage = self._client.chat(
            template,
            f"Question: {query}\nRetrieval stage just completed: {stage}\n\n"
            f"Evidence:\n{_numbered(evidence_texts)}",
        )
        head = content.strip().split(None, 1)[0].strip(".,:;!").casefold() if content.strip() else ""
        if head == "sufficient":
            return Sufficiency.SUFFICIENT, usage
        if head == "insufficient":
            return Sufficiency.ESCALATE, usage
        raise OracleProtocolError(
            f"expected sufficient/insufficient verdict, got {content[:120]!r}"
        )


class RemoteRewriter:
    name = "remote_rewriter"

    def __init__(self, client: RemoteClient, prompts: PromptLibrary) -> None:
        self._client = client
        self._prompts = prompts

    def rewrite(
        self,
        query: str,
        answer: str,
        evidence_texts: Sequence[str],
        failure: str,
        entity_names: Sequence[str],
    ) -> tuple[str, TokenUsage]:
        template = self._prompts.load("rewriter")
        names = "; ".join(entity_names) if entity_names else "(none)"
        content, usage = self._client.chat(
            template,
            f"Failure type: {failure}\nOriginal question: {query}\n"
            f"Rejected answer: {answer}\nKnown entities: {names}\n\n"
            f"Evidence:\n{_numbered(evidence_texts)}",
        )
        return content.strip(), usage


class RemoteMentionExtractor:
    name = "remote_mention_extractor"

    def __init__(self, client: RemoteClient, prompts: PromptLibrary) -> None:
        self._client = client
        self._prompts = prompts

    def extract(self, query: str) -> tuple[tuple[list[str], list[str]], TokenUsage]:
        template = self._prompts.load("mention_extractor")
        content, usage = self._client.chat(template, f"Question: {query}")
        payload = _json_payload(content)
        if not isinstance(payload, Mapping):
            raise OracleProtocolError("mention reply must be a JSON object", body=content[:500])
        entities = payload.get("entities", [])
        relations = payload.get("relations", [])
        if not isinstance(entities, list) or not all(isinstance(e, str) for e in entities):
            raise OracleProtocolError("'entities' must be a list of strings")
        if not isinstance(relations, list) or not all(isinstance(r, str) for r in relations):
            raise OracleProtocolError("'relations' must be a list of strings")
        return (entities, relations), usage


class RemoteTripleExtractor:
    name = "remote_triple_extractor"

    def __init__(self, client: RemoteClient, prompts: PromptLibrary) -> None:
        self._client = client
        self._prompts = prompts

    def extract_triples(
        self, chunks: Sequence[tuple[str, str]]
    ) -> tuple[list[TripleCandidate], TokenUsage]:
        template = self._prompts.load("triple_extractor")
        block = "\n".join(f"({chunk_id}) {text}" for chunk_id, text in chunks)
        content, usage = self._client.chat(template, f"Chunks:\n{block}")
        payload = _json_payload(content)
        if not isinstance(payload, list):
            raise OracleProtocolError("triple reply must be a JSON array", body=content[:500])
        fields = ("subject", "relation", "object", "source_chunk_id")
        candidates = []
        for item in payload:
            if not isinstance(item, Mapping) or not all(
                isinstance(item.get(f), str) and item.get(f) for f in fields
            ):
                raise OracleProtocolError(
                    f"each triple needs string fields {fields}", body=content[:500]
                )
            candidates.append(
                TripleCandidate(
                    subject=item["subject"],
                    relation=item["relation"],
                    object=item["object"],
                    source_chunk_id=item["source_chunk_id"],
                )
            )
        return candidates, usage


def remote_suite(
    prompt_dir: str | Path | None = None,
    config: RemoteEndpointConfig | None = None,
    client: RemoteClient | None = None,
) -> OracleSuite:
    """Build a fully remote oracle suite (non-deterministic by definition)."""
    if client is None:
        client = RemoteClient(config or RemoteEndpointConfig.from_env())
    prompts = PromptLibrary(prompt_dir)
    return OracleSuite(
        embedder=RemoteEmbedder(client),
        generator=RemoteGenerator(client, prompts),
        validator_rel=RemoteValidator(client, prompts, "rel"),
        validator_grd=RemoteValidator(client, prompts, "grd"),
        validator_ans=RemoteValidator(client, prompts, "ans"),
        judge=RemoteSufficiencyJudge(client, prompts),
        rewriter=RemoteRewriter(client, prompts),
        extractor=RemoteMentionExtractor(client, prompts),
        triple_extractor=RemoteTripleExtractor(client, prompts),
        deterministic=False,
    )
