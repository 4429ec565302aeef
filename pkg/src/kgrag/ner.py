"""Named-entity extraction from questions, used to seed entity-based retrieval.

Three modes: ``off`` (empty seed set, the ablation configuration),
``heuristic`` (maximal runs of capitalized tokens, fully offline), and
``model`` (a thin extraction prompt over a chat client, falling back to
the heuristic when the client is unavailable).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .embedding import cosine
from .errors import KgragError
from .index import KnowledgeIndex

logger = logging.getLogger(__name__)

# runs of capitalized tokens; the matched substring is returned verbatim
_CAP_RUN = re.compile(r"[A-Z][A-Za-z0-9'’\-]*(?:\s+[A-Z][A-Za-z0-9'’\-]*)*")
_INTERROGATIVES = frozenset({"who", "what", "which", "when", "where", "how"})

_MODEL_PROMPT = """List the named entities mentioned in the question below.
Respond with one line per entity, each formatted exactly as:
ENTITY: <entity as it appears in the question>

Question:
{question}
"""

_ENTITY_LINE = re.compile(r"^\s*entity\s*:\s*(.+?)\s*$", re.IGNORECASE)


@dataclass
class ExtractedEntities:
    mentions: list[str] = field(default_factory=list)
    source: str = "heuristic"


def _dedupe(mentions: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for m in mentions:
        key = m.casefold()
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


def _heuristic(question: str) -> list[str]:
    stripped_start = len(question) - len(question.lstrip())
    mentions = []
    for match in _CAP_RUN.finditer(question):
        text = match.group(0)
        if match.start() == stripped_start:
            # a question-initial interrogative is a capitalization artifact,
            # never a mention; the rest of the run may still be one
            first, _, rest = text.partition(" ")
            if first.casefold() in _INTERROGATIVES:
                text = rest.strip()
        if text:
            mentions.append(text)
    return _dedupe(mentions)


def _model(question: str, client) -> list[str]:
    result = client.complete(_MODEL_PROMPT.format(question=question))
    mentions = []
    for line in result.text.splitlines():
        m = _ENTITY_LINE.match(line)
        if m and m.group(1) in question:  # verbatim substrings only
            mentions.append(m.group(1))
    return _dedupe(mentions)


def extract_entities(question: str, mode: str = "heuristic", client=None) -> ExtractedEntities:
    """Extract entity mentions from the question per the configured mode.

    Model mode needs a chat client; on any client failure it falls back to
    the heuristic with a logged warning. Every returned mention occurs
    verbatim in the question.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    if mode == "off":
        return ExtractedEntities(mentions=[], source="heuristic")
    if mode == "heuristic":
        return ExtractedEntities(mentions=_heuristic(question), source="heuristic")
    if mode == "model":
        if client is None:
            logger.warning("ner.mode=model but no client configured; using heuristic")
            return ExtractedEntities(mentions=_heuristic(question), source="heuristic")
        try:
            return ExtractedEntities(mentions=_model(question, client), source="model")
        except KgragError as exc:
            logger.warning("model NER unavailable (%s); using heuristic", exc)
            return ExtractedEntities(mentions=_heuristic(question), source="heuristic")
    raise ValueError(f"unknown ner mode: {mode!r}")


def match_entities(
    index: KnowledgeIndex,
    mentions: ExtractedEntities | list[str],
    embed_provider=None,
    name_match_threshold: float = 0.75,
) -> set[str]:
    """Resolve mentions to entity ids.

    Case-insensitive exact name matches win; otherwise, when a provider is
    given, the entity whose name embedding is most similar to the mention
    is used if it clears the threshold. An empty result is valid.
    """
    if isinstance(mentions, ExtractedEntities):
        mentions = mentions.mentions
    by_name: dict[str, list[str]] = {}
    for eid, entity in index.entities.items():
        by_name.setdefault(entity.name.casefold(), []).append(eid)

    matched: set[str] = set()
    for mention in mentions:
        exact = by_name.get(mention.casefold())
        if exact:
            matched.update(exact)
            continue
        if embed_provider is None or not index.entities:
            continue
        mention_vec = embed_provider.embed(mention)
        best_id, best_score = None, -2.0
        for eid in sorted(index.entities):
            name = index.entities[eid].name
            if not name.strip():
                continue
            score = cosine(mention_vec, embed_provider.embed(name))
            if score > best_score:
                best_id, best_score = eid, score
        if best_id is not None and best_score >= name_match_threshold:
            matched.add(best_id)
    return matched
