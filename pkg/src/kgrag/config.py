"""Run configuration: nested dataclasses with YAML overrides.

Every knob reachable from the pipeline lives here so that a single config
file (plus environment variables for secrets) fully determines a run.
Auth tokens are never stored in config files; clients read them from
``KGRAG_EMBEDDING_TOKEN``, ``KGRAG_GENERATOR_TOKEN`` and
``KGRAG_JUDGE_TOKEN``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

NER_MODES = ("off", "heuristic", "model")
CLIENT_KINDS = ("remote", "scripted")
EMBEDDING_KINDS = ("remote", "mock")


@dataclass
class NerConfig:
    mode: str = "heuristic"
    name_match_threshold: float = 0.75


@dataclass
class RetrievalConfig:
    k_relations: int = 10
    k_text_units: int = 5
    k_communities: int = 3
    min_similarity: float = 0.2


@dataclass
class EnrichmentConfig:
    max_new_relations: int = 10
    max_new_text_units: int = 5


@dataclass
class EvalConfig:
    threshold_faithfulness: float = 0.8
    threshold_completeness: float = 0.8
    relevance_n_questions: int = 3


@dataclass
class EmbeddingConfig:
    kind: str = "mock"
    dimension: int = 64
    endpoint: str = ""
    cache_path: str = ""  # default: <index_dir>/embeddings.bin
    timeout_seconds: float = 30.0


@dataclass
class ClientConfig:
    """Chat-completion client settings (generator and judge share the shape)."""

    kind: str = "scripted"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    transcript: str = ""  # scripted clients replay this file
    max_attempts: int = 3
    backoff_seconds: float = 1.0
    timeout_seconds: float = 120.0


@dataclass
class GenerationConfig:
    token_budget: int = 4000


@dataclass
class IndexConfig:
    fallback_summary_max_chars: int = 500


@dataclass
class ServiceConfig:
    timeout_seconds: float = 300.0


@dataclass
class PipelineConfig:
    """Everything one question-answering run depends on."""

    max_iterations: int = 4
    ner: NerConfig = field(default_factory=NerConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    enrichment: EnrichmentConfig = field(default_factory=EnrichmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    generator: ClientConfig = field(default_factory=ClientConfig)
    judge: ClientConfig = field(default_factory=ClientConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    index: IndexConfig = field(default_factory=IndexConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def validate(self) -> "PipelineConfig":
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name, value in (
            ("eval.threshold_faithfulness", self.eval.threshold_faithfulness),
            ("eval.threshold_completeness", self.eval.threshold_completeness),
        ):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.ner.mode not in NER_MODES:
            raise ValueError(f"ner.mode must be one of {NER_MODES}, got {self.ner.mode!r}")
        if self.embedding.kind not in EMBEDDING_KINDS:
            raise ValueError(f"embedding.kind must be one of {EMBEDDING_KINDS}")
        for label, client in (("generator", self.generator), ("judge", self.judge)):
            if client.kind not in CLIENT_KINDS:
                raise ValueError(f"{label}.kind must be one of {CLIENT_KINDS}")
        for name, value in (
            ("retrieval.k_relations", self.retrieval.k_relations),
            ("retrieval.k_text_units", self.retrieval.k_text_units),
            ("retrieval.k_communities", self.retrieval.k_communities),
        ):
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.embedding.dimension < 1:
            raise ValueError("embedding.dimension must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _apply_overrides(obj, overrides: dict, path: str) -> None:
    for key, value in overrides.items():
        if not hasattr(obj, key):
            raise ValueError(f"unknown config key: {path}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"config section {path}{key} must be a mapping")
            _apply_overrides(current, value, f"{path}{key}.")
        else:
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ValueError(f"config key {path}{key} must be a boolean")
            if isinstance(current, float) and isinstance(value, int):
                value = float(value)
            if current is not None and not isinstance(value, type(current)):
                raise ValueError(
                    f"config key {path}{key} expects {type(current).__name__}, "
                    f"got {type(value).__name__}"
                )
            setattr(obj, key, value)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    _apply_overrides(cfg, data or {}, "")
    return cfg.validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Build a PipelineConfig from a YAML file; defaults when path is None."""
    if path is None:
        return PipelineConfig().validate()
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    return config_from_dict(raw)
