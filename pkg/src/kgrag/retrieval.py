"""Edge-based semantic search and the per-question retrieval state.

Relations, text units, and community summaries are ranked jointly by
cosine similarity to the question vector. The initial context prefers
relations incident to NER-seeded entities when enough of them clear the
similarity floor, and otherwise falls back to global ranking, so a
missed NER hit never strands a question. Entities pulled into the
context form the fringe that later one-hop expansion starts from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import (
    KIND_COMMUNITY,
    KIND_RELATION,
    KIND_TEXT_UNIT,
    EmbeddingStore,
    cosine,
)
from .errors import EmptyStore
from .index import KnowledgeIndex, relations_incident_to


@dataclass(frozen=True)
class ScoredItem:
    kind: str  # relation | text_unit | community_summary
    id: str
    score: float


@dataclass
class QueryContext:
    """Evolving retrieval state for one question.

    Item lists are append-only and parallel to their ``*_ids`` lists;
    ``included_item_ids`` is the dedup registry over (kind, id) pairs.
    """

    triples: list[tuple[str, str, str]] = field(default_factory=list)
    text_units: list[str] = field(default_factory=list)
    community_summaries: list[str] = field(default_factory=list)
    triple_ids: list[str] = field(default_factory=list)
    text_unit_ids: list[str] = field(default_factory=list)
    community_ids: list[str] = field(default_factory=list)
    included_item_ids: set[tuple[str, str]] = field(default_factory=set)
    included_entity_ids: set[str] = field(default_factory=set)
    fringe: set[str] = field(default_factory=set)
    iteration: int = 1

    def item_count(self) -> int:
        return len(self.triples) + len(self.text_units) + len(self.community_summaries)

    def size_summary(self) -> dict[str, int]:
        return {
            "entities": len(self.included_entity_ids),
            "triples": len(self.triples),
            "text_units": len(self.text_units),
            "community_summaries": len(self.community_summaries),
        }


def rank_items(
    question_vec: np.ndarray,
    store: EmbeddingStore,
    candidate_ids: set[tuple[str, str]] | None = None,
) -> list[ScoredItem]:
    """Score candidates against the question and sort them.

    Descending by score, ties broken by ascending id then kind, which
    makes the order total and runs deterministic.
    """
    if store.is_empty():
        raise EmptyStore("embedding store holds no vectors")
    keys = store.keys() if candidate_ids is None else sorted(candidate_ids)
    scored = [
        ScoredItem(kind=kind, id=item_id, score=cosine(question_vec, store.vector(kind, item_id)))
        for kind, item_id in keys
    ]
    scored.sort(key=lambda s: (-s.score, s.id, s.kind))
    return scored


def _keys_for(store: EmbeddingStore, kind: str, ids: set[str] | None = None):
    if ids is None:
        return {k for k in store.keys(kind)}
    return {(kind, i) for i in ids}


def add_relation(ctx: QueryContext, index: KnowledgeIndex, relation_id: str) -> set[str]:
    """Append one relation triple; returns its endpoint entity ids. No-op on duplicates."""
    key = (KIND_RELATION, relation_id)
    if key in ctx.included_item_ids:
        return set()
    rel = index.relations[relation_id]
    ctx.included_item_ids.add(key)
    ctx.triples.append(
        (index.entities[rel.source].name, rel.description, index.entities[rel.target].name)
    )
    ctx.triple_ids.append(relation_id)
    return {rel.source, rel.target}


def add_text_unit(ctx: QueryContext, index: KnowledgeIndex, unit_id: str) -> set[str]:
    """Append one text unit; returns its tagged entity ids. No-op on duplicates."""
    key = (KIND_TEXT_UNIT, unit_id)
    if key in ctx.included_item_ids:
        return set()
    ctx.included_item_ids.add(key)
    ctx.text_units.append(index.text_units[unit_id].text)
    ctx.text_unit_ids.append(unit_id)
    return set(index.text_units[unit_id].entity_ids)


def add_community(ctx: QueryContext, index: KnowledgeIndex, community_id: str) -> None:
    key = (KIND_COMMUNITY, community_id)
    if key in ctx.included_item_ids:
        return
    ctx.included_item_ids.add(key)
    ctx.community_summaries.append(index.communities[community_id].summary)
    ctx.community_ids.append(community_id)


def initial_context(
    index: KnowledgeIndex,
    store: EmbeddingStore,
    question_vec: np.ndarray,
    seeds: set[str],
    k_relations: int = 10,
    k_text_units: int = 5,
    k_communities: int = 3,
    min_similarity: float = 0.2,
) -> QueryContext:
    """Assemble the iteration-1 context from the top-ranked index items.

    Relation selection is restricted to relations incident to the seeds
    when the seeds are non-empty and at least ``k_relations`` incident
    candidates score at or above ``min_similarity``; otherwise relations
    are drawn from the global ranking. Text units and community summaries
    are always ranked globally. The fringe starts as every included
    entity.
    """
    if min(k_relations, k_text_units, k_communities) < 1:
        raise ValueError("k parameters must be >= 1")

    ctx = QueryContext(included_entity_ids=set(seeds), iteration=1)

    selected_relations: list[ScoredItem] = []
    relation_keys = _keys_for(store, KIND_RELATION)
    if relation_keys:
        if seeds:
            incident = relations_incident_to(index, seeds)
            seeded = rank_items(question_vec, store, _keys_for(store, KIND_RELATION, incident))
            strong = [s for s in seeded if s.score >= min_similarity]
            if len(strong) >= k_relations:
                selected_relations = strong[:k_relations]
        if not selected_relations:
            selected_relations = rank_items(question_vec, store, relation_keys)[:k_relations]

    for item in selected_relations:
        ctx.included_entity_ids |= add_relation(ctx, index, item.id)

    unit_keys = _keys_for(store, KIND_TEXT_UNIT)
    if unit_keys:
        for item in rank_items(question_vec, store, unit_keys)[:k_text_units]:
            ctx.included_entity_ids |= add_text_unit(ctx, index, item.id)

    community_keys = _keys_for(store, KIND_COMMUNITY)
    if community_keys:
        for item in rank_items(question_vec, store, community_keys)[:k_communities]:
            add_community(ctx, index, item.id)

    ctx.fringe = set(ctx.included_entity_ids)
    return ctx
