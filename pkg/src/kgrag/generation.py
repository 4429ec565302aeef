"""Prompt assembly and chat-completion clients.

The prompt template is fixed; only the question and context slots vary.
Accumulated context items are re-ranked against the question, exact
duplicates dropped, and the two categories (factual triples, unstructured
passages) interleaved 1:1 into the budget, so truncation always keeps a
prefix of each category's ranked order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .embedding import (
    KIND_COMMUNITY,
    KIND_RELATION,
    KIND_TEXT_UNIT,
    EmbeddingStore,
    cosine,
)
from .errors import BudgetTooSmall, ClientUnreachable, EmptyCompletion, UnexpectedPrompt
from .retrieval import QueryContext

logger = logging.getLogger(__name__)

GENERATOR_TOKEN_ENV = "KGRAG_GENERATOR_TOKEN"
JUDGE_TOKEN_ENV = "KGRAG_JUDGE_TOKEN"

TRIPLES_HEADER = "Relevant text units:"
PASSAGES_HEADER = "Supporting passages:"
NO_CONTEXT_TEXT = "No context available."
NO_ANSWER_SENTENCE = (
    "The context does not provide enough information to answer this question."
)

PROMPT_TEMPLATE = (
    "You are a helpful question-answering assistant.\n"
    "Question: {question}\n"
    "Context: {context}\n"
    "Instructions:\n"
    "- Use the information provided in the context to answer the question.\n"
    "- Pay special attention to the 'Relevant text units', which contain "
    "structured facts from the knowledge graph.\n"
    "- Be direct and concise in your answer.\n"
    "- If the context truly lacks the information needed to answer, say: "
    f"'{NO_ANSWER_SENTENCE}'\n"
    "- Do not fabricate information that is not supported by the context.\n"
    "Answer:\n"
)

# whitespace tokens under-count model tokens; 1.3 is a conservative factor
TOKEN_SAFETY_FACTOR = 1.3


@dataclass
class Prompt:
    question: str
    rendered_context: str
    full_text: str
    token_estimate: int


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text.split()) * TOKEN_SAFETY_FACTOR)


def render_triple(triple: tuple[str, str, str]) -> str:
    source, description, target = triple
    return f"{source} — {description} — {target}"


def _render_context(triple_lines: list[str], passage_lines: list[str]) -> str:
    return "\n".join(
        [TRIPLES_HEADER, *triple_lines, "", PASSAGES_HEADER, *passage_lines]
    )


def _instantiate(question: str, context_text: str) -> str:
    return PROMPT_TEMPLATE.format(question=question, context=context_text)


def build_prompt(
    question: str,
    ctx: QueryContext,
    question_vec: np.ndarray,
    store: EmbeddingStore,
    budget: int = 4000,
) -> Prompt:
    """Render the final prompt from the accumulated context.

    Items are scored against the question and sorted descending (ties by
    id) within their category; exact-duplicate rendered strings are kept
    once. Selection alternates triple/passage until adding the next item
    would push the whole prompt past ``budget`` estimated tokens.
    """
    base = _instantiate(question, NO_CONTEXT_TEXT)
    if estimate_tokens(base) > budget:
        raise BudgetTooSmall(
            f"budget {budget} cannot fit the question and instructions "
            f"({estimate_tokens(base)} estimated tokens)"
        )

    if ctx.item_count() == 0:
        return Prompt(
            question=question,
            rendered_context=NO_CONTEXT_TEXT,
            full_text=base,
            token_estimate=estimate_tokens(base),
        )

    def ranked(entries):
        # entries: (kind, item_id, rendered_text)
        scored = [
            (-cosine(question_vec, store.vector(kind, item_id)), item_id, kind, text)
            for kind, item_id, text in entries
        ]
        scored.sort(key=lambda t: t[:3])
        return [t[3] for t in scored]

    triples = ranked(
        [
            (KIND_RELATION, rid, render_triple(triple))
            for rid, triple in zip(ctx.triple_ids, ctx.triples)
        ]
    )
    passages = ranked(
        [
            (KIND_TEXT_UNIT, uid, text)
            for uid, text in zip(ctx.text_unit_ids, ctx.text_units)
        ]
        + [
            (KIND_COMMUNITY, cid, text)
            for cid, text in zip(ctx.community_ids, ctx.community_summaries)
        ]
    )

    seen: set[str] = set()
    triple_lines: list[str] = []
    passage_lines: list[str] = []

    def try_add(text: str, into: list[str]) -> bool:
        if text in seen:
            return True  # duplicate: dropped, keep going
        into.append(text)
        candidate = _instantiate(question, _render_context(triple_lines, passage_lines))
        if estimate_tokens(candidate) > budget:
            into.pop()
            return False
        seen.add(text)
        return True

    ti, pi = 0, 0
    while ti < len(triples) or pi < len(passages):
        if ti < len(triples):
            if not try_add(triples[ti], triple_lines):
                break
            ti += 1
        if pi < len(passages):
            if not try_add(passages[pi], passage_lines):
                break
            pi += 1

    rendered = _render_context(triple_lines, passage_lines)
    full_text = _instantiate(question, rendered)
    return Prompt(
        question=question,
        rendered_context=rendered,
        full_text=full_text,
        token_estimate=estimate_tokens(full_text),
    )


@dataclass
class ChatResult:
    text: str
    request: dict
    response: dict


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedChatClient:
    """Replays a declared transcript; unexpected prompts raise instead of improvising.

    Transcript records are JSON objects, one per line:
    ``{"match": <spec>, "response": <text>}`` where the match spec is the
    SHA-256 hex of the exact prompt, a substring of it, or a list of
    substrings that must all occur. Records matching repeatedly are
    consumed in file order, which lets one transcript script a different
    reply for each iteration of the loop.
    """

    def __init__(self, records: list[dict]):
        for i, record in enumerate(records):
            if "match" not in record or "response" not in record:
                raise ValueError(f"transcript record {i} needs 'match' and 'response'")
        self._records = [dict(r, _consumed=False) for r in records]
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatClient":
        records = []
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(json.loads(line))
        return cls(records)

    @staticmethod
    def _matches(spec, prompt: str, digest: str) -> bool:
        if isinstance(spec, list):
            return all(part in prompt for part in spec)
        return spec == digest or spec in prompt

    def complete(self, prompt: str) -> ChatResult:
        digest = prompt_hash(prompt)
        with self._lock:
            for record in self._records:
                if not record["_consumed"] and self._matches(record["match"], prompt, digest):
                    record["_consumed"] = True
                    return ChatResult(
                        text=record["response"],
                        request={"prompt": prompt},
                        response={"scripted_match": record["match"]},
                    )
        raise UnexpectedPrompt(
            f"no unconsumed transcript record matches prompt (sha256 {digest[:12]}…): "
            f"{prompt[:120]!r}"
        )


class RemoteChatClient:
    """Chat-completion service client: POST model/messages/temperature, read first choice."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        temperature: float = 0.0,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        timeout: float = 120.0,
        token: str | None = None,
        token_env: str = GENERATOR_TOKEN_ENV,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self.token = token if token is not None else os.environ.get(token_env, "")

    def complete(self, prompt: str) -> ChatResult:
        request = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    self.endpoint, json=request, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                payload = resp.json()
                text = payload["choices"][0]["message"]["content"]
                return ChatResult(text=text, request=request, response=payload)
            except (requests.RequestException, KeyError, IndexError, TypeError) as exc:
                last_error = exc
                logger.warning(
                    "chat request attempt %d/%d failed: %s", attempt + 1, self.max_attempts, exc
                )
        raise ClientUnreachable(
            f"chat service at {self.endpoint} failed after {self.max_attempts} attempts: "
            f"{last_error}"
        )


def generate_answer(client, prompt: Prompt) -> ChatResult:
    """Ask the client for an answer; empty completions are an error."""
    result = client.complete(prompt.full_text)
    if not result.text.strip():
        raise EmptyCompletion("client returned an empty answer")
    return result
