"""The per-question control loop.

One question runs through: entity extraction (per NER mode), question
embedding, initial retrieval, then up to ``max_iterations`` rounds of
prompt -> answer -> evaluate -> gate, expanding the context by one hop
before every round after the first. The loop stops at the first accepted
answer; if none is accepted the best-scoring answer is returned anyway.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import enrichment, evaluation, generation, ner, retrieval
from .config import PipelineConfig
from .embedding import (
    DeterministicEmbeddingProvider,
    EmbeddingCache,
    EmbeddingStore,
    RemoteEmbeddingProvider,
)
from .generation import (
    GENERATOR_TOKEN_ENV,
    JUDGE_TOKEN_ENV,
    RemoteChatClient,
    ScriptedChatClient,
)
from .index import KnowledgeIndex

logger = logging.getLogger(__name__)


@dataclass
class IterationTrace:
    iteration: int
    entities: int
    triples: int
    text_units: int
    community_summaries: int
    prompt: str
    answer: str
    scores: evaluation.EvaluationScores
    # wall clock: observational only, never part of trace identity
    duration_seconds: float = field(default=0.0, compare=False)


@dataclass
class AnswerRecord:
    question_id: str
    question: str
    final_answer: str
    final_scores: evaluation.EvaluationScores
    solved_at_iteration: int
    accepted: bool
    traces: list[IterationTrace] = field(default_factory=list)


@dataclass
class Runtime:
    """Live client instances built from a PipelineConfig."""

    embed_provider: object
    chat_client: object
    judge_client: object


def _build_chat_client(client_cfg, token_env: str):
    if client_cfg.kind == "scripted":
        if not client_cfg.transcript:
            raise ValueError("scripted client needs a transcript path")
        return ScriptedChatClient.from_file(client_cfg.transcript)
    return RemoteChatClient(
        endpoint=client_cfg.endpoint,
        model=client_cfg.model,
        temperature=client_cfg.temperature,
        max_attempts=client_cfg.max_attempts,
        backoff_seconds=client_cfg.backoff_seconds,
        timeout=client_cfg.timeout_seconds,
        token_env=token_env,
    )


def build_embedding_provider(cfg: PipelineConfig, index_dir: str | Path | None = None):
    """Instantiate the embedding provider; the cache sidecar sits next to the index."""
    cache_path = cfg.embedding.cache_path or None
    if cache_path is None and index_dir is not None:
        cache_path = Path(index_dir) / "embeddings.bin"
    cache = EmbeddingCache(cfg.embedding.dimension, cache_path)
    if cfg.embedding.kind == "mock":
        return DeterministicEmbeddingProvider(cfg.embedding.dimension, cache)
    if not cfg.embedding.endpoint:
        raise ValueError("embedding.kind=remote needs embedding.endpoint")
    return RemoteEmbeddingProvider(
        cfg.embedding.endpoint,
        cfg.embedding.dimension,
        cache,
        timeout=cfg.embedding.timeout_seconds,
    )


def build_runtime(cfg: PipelineConfig, index_dir: str | Path | None = None) -> Runtime:
    """Instantiate the provider and both chat clients from the config."""
    return Runtime(
        embed_provider=build_embedding_provider(cfg, index_dir),
        chat_client=_build_chat_client(cfg.generator, GENERATOR_TOKEN_ENV),
        judge_client=_build_chat_client(cfg.judge, JUDGE_TOKEN_ENV),
    )


def select_final(traces: list[IterationTrace]) -> IterationTrace:
    """The accepted trace, else the best by faithfulness + completeness.

    Later iterations win ties, so the fallback is the most-informed of the
    equally scored answers. Shared with report recomputation, which must
    reproduce the pipeline's choice exactly.
    """
    for trace in traces:
        if trace.scores.accepted:
            return trace
    return max(
        traces, key=lambda t: (t.scores.faithfulness + t.scores.completeness, t.iteration)
    )


def answer_question(
    index: KnowledgeIndex,
    store: EmbeddingStore,
    cfg: PipelineConfig,
    question: str,
    runtime: Runtime | None = None,
    question_id: str = "q",
) -> AnswerRecord:
    """Run the full feedback loop for one question."""
    if runtime is None:
        runtime = build_runtime(cfg)
    provider = runtime.embed_provider

    mentions = ner.extract_entities(question, cfg.ner.mode, client=runtime.judge_client)
    seeds = ner.match_entities(
        index, mentions, embed_provider=provider,
        name_match_threshold=cfg.ner.name_match_threshold,
    )
    question_vec = provider.embed(question)

    ctx = retrieval.initial_context(
        index,
        store,
        question_vec,
        seeds,
        k_relations=cfg.retrieval.k_relations,
        k_text_units=cfg.retrieval.k_text_units,
        k_communities=cfg.retrieval.k_communities,
        min_similarity=cfg.retrieval.min_similarity,
    )

    traces: list[IterationTrace] = []
    for iteration in range(1, cfg.max_iterations + 1):
        started = time.perf_counter()
        if iteration > 1:
            ctx = enrichment.expand_context(index, store, question_vec, ctx, cfg.enrichment)

        prompt = generation.build_prompt(
            question, ctx, question_vec, store, budget=cfg.generation.token_budget
        )
        result = generation.generate_answer(runtime.chat_client, prompt)
        scores = evaluation.evaluate_answer(
            runtime.judge_client,
            provider,
            question,
            result.text,
            prompt.rendered_context,
            threshold_faithfulness=cfg.eval.threshold_faithfulness,
            threshold_completeness=cfg.eval.threshold_completeness,
            relevance_n_questions=cfg.eval.relevance_n_questions,
        )
        sizes = ctx.size_summary()
        traces.append(
            IterationTrace(
                iteration=iteration,
                entities=sizes["entities"],
                triples=sizes["triples"],
                text_units=sizes["text_units"],
                community_summaries=sizes["community_summaries"],
                prompt=prompt.full_text,
                answer=result.text,
                scores=scores,
                duration_seconds=time.perf_counter() - started,
            )
        )
        logger.debug(
            "%s iteration %d: faithfulness=%.3f completeness=%.3f accepted=%s",
            question_id, iteration, scores.faithfulness, scores.completeness, scores.accepted,
        )
        if scores.accepted:
            break

    final = select_final(traces)
    accepted = final.scores.accepted
    return AnswerRecord(
        question_id=question_id,
        question=question,
        final_answer=final.answer,
        final_scores=final.scores,
        solved_at_iteration=final.iteration if accepted else cfg.max_iterations,
        accepted=accepted,
        traces=traces,
    )
