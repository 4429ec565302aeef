"""Iterative, feedback-driven graph RAG.

Answer questions from a knowledge-graph index: retrieve relations, text
units and community summaries by similarity to the question, generate an
answer, score it with a five-metric suite, and expand the graph context
one hop and retry while the quality gate fails (up to a configurable
iteration cap).
"""

from .config import PipelineConfig, load_config
from .embedding import (
    DeterministicEmbeddingProvider,
    EmbeddingCache,
    EmbeddingStore,
    RemoteEmbeddingProvider,
    cosine,
    embed_index,
)
from .enrichment import expand_context
from .evaluation import (
    EvaluationScores,
    answer_context_cosine,
    bertscore,
    completeness,
    evaluate_answer,
    faithfulness,
    gate,
    relevance,
)
from .generation import (
    Prompt,
    RemoteChatClient,
    ScriptedChatClient,
    build_prompt,
    generate_answer,
)
from .harness import (
    BenchmarkQuestion,
    RunReport,
    aggregate,
    load_dataset,
    run_benchmark,
    summarize,
    write_report,
)
from .index import (
    Community,
    Entity,
    KnowledgeIndex,
    Relation,
    TextUnit,
    build_fallback_communities,
    load_index,
    neighbors,
    save_index,
    text_units_for,
)
from .ner import ExtractedEntities, extract_entities, match_entities
from .pipeline import AnswerRecord, IterationTrace, Runtime, answer_question, build_runtime
from .retrieval import QueryContext, ScoredItem, initial_context, rank_items

__all__ = [
    "AnswerRecord",
    "BenchmarkQuestion",
    "Community",
    "DeterministicEmbeddingProvider",
    "EmbeddingCache",
    "EmbeddingStore",
    "Entity",
    "EvaluationScores",
    "ExtractedEntities",
    "IterationTrace",
    "KnowledgeIndex",
    "PipelineConfig",
    "Prompt",
    "QueryContext",
    "Relation",
    "RemoteChatClient",
    "RemoteEmbeddingProvider",
    "RunReport",
    "Runtime",
    "ScoredItem",
    "ScriptedChatClient",
    "TextUnit",
    "aggregate",
    "answer_context_cosine",
    "answer_question",
    "bertscore",
    "build_fallback_communities",
    "build_prompt",
    "build_runtime",
    "completeness",
    "cosine",
    "embed_index",
    "evaluate_answer",
    "expand_context",
    "extract_entities",
    "faithfulness",
    "gate",
    "generate_answer",
    "initial_context",
    "load_config",
    "load_dataset",
    "load_index",
    "match_entities",
    "neighbors",
    "rank_items",
    "relevance",
    "run_benchmark",
    "save_index",
    "summarize",
    "text_units_for",
    "write_report",
]
