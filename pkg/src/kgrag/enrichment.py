"""One-hop context expansion, run when an answer fails the quality gate.

Starting from the fringe, the graph is walked one edge further to find
entities not yet in the context; their relations and tagged text units
are ranked against the question and appended under per-iteration caps.
The fringe is replaced, not accumulated, so every round explores exactly
one additional hop, and repeated expansion drains to an empty fringe
within the component diameter.
"""

from __future__ import annotations

import copy

import numpy as np

from .config import EnrichmentConfig
from .embedding import KIND_RELATION, KIND_TEXT_UNIT, EmbeddingStore
from .index import KnowledgeIndex, neighbors, relations_incident_to, text_units_for
from .retrieval import QueryContext, add_relation, add_text_unit, rank_items


def expand_context(
    index: KnowledgeIndex,
    store: EmbeddingStore,
    question_vec: np.ndarray,
    ctx: QueryContext,
    caps: EnrichmentConfig | None = None,
) -> QueryContext:
    """Return a new context grown by one hop from the fringe.

    Prior items keep their order. New relations incident to the frontier
    entities and new text units tagged with them are appended in ranked
    order, up to ``caps``. Frontier entities mentioned by any item of the
    grown context (a relation added earlier can already reference one)
    become the new fringe; an exhausted frontier just bumps the iteration
    counter.
    """
    caps = caps or EnrichmentConfig()
    new_ctx = copy.deepcopy(ctx)
    new_ctx.iteration = ctx.iteration + 1

    frontier = neighbors(index, ctx.fringe, 1) - ctx.included_entity_ids if ctx.fringe else set()
    if not frontier:
        new_ctx.fringe = set()
        return new_ctx

    candidate_relations = {
        (KIND_RELATION, rid)
        for rid in relations_incident_to(index, frontier)
        if (KIND_RELATION, rid) not in ctx.included_item_ids
    }
    if candidate_relations:
        ranked = rank_items(question_vec, store, candidate_relations)
        for item in ranked[: caps.max_new_relations]:
            add_relation(new_ctx, index, item.id)

    candidate_units = {
        (KIND_TEXT_UNIT, uid)
        for uid in text_units_for(index, frontier)
        if (KIND_TEXT_UNIT, uid) not in ctx.included_item_ids
    }
    if candidate_units:
        ranked = rank_items(question_vec, store, candidate_units)
        for item in ranked[: caps.max_new_text_units]:
            add_text_unit(new_ctx, index, item.id)

    touched: set[str] = set()
    for rid in new_ctx.triple_ids:
        rel = index.relations[rid]
        touched |= {rel.source, rel.target} & frontier
    for uid in new_ctx.text_unit_ids:
        touched |= index.text_units[uid].entity_ids & frontier

    new_ctx.included_entity_ids |= touched
    new_ctx.fringe = touched
    return new_ctx
