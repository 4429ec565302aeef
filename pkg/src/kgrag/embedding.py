"""Text embedding providers, the cosine primitive, and the index vector store.

Two providers share one contract: the same input text always yields the
same vector. The deterministic provider derives a unit vector from a
seeded hash of the normalized text, which keeps the whole retrieval and
metric stack runnable offline. The remote provider speaks a minimal POST
protocol and relies on a content-hash cache for determinism and
resumability.

Cache sidecar format (binary, little-endian): 8-byte magic, uint32
dimension, uint64 record count, then fixed-width records of a 32-byte
SHA-256 key followed by ``dimension`` float64 components.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import struct
import threading
from pathlib import Path

import numpy as np
import requests

from .errors import (
    DimensionMismatch,
    EmptyText,
    NotEmbedded,
    ProviderUnreachable,
    ZeroVector,
)
from .index import KnowledgeIndex

logger = logging.getLogger(__name__)

_CACHE_MAGIC = b"KGRAGEMB"
_WS = re.compile(r"\s+")

EMBED_TOKEN_ENV = "KGRAG_EMBEDDING_TOKEN"


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace so formatting noise never misses the cache."""
    return _WS.sub(" ", text).strip()


def text_key(text: str) -> bytes:
    return hashlib.sha256(normalize_text(text).encode("utf-8")).digest()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| * |b|), clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    value = float(np.dot(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


class EmbeddingCache:
    """Content-hash keyed vector cache with an optional binary sidecar file."""

    def __init__(self, dimension: int, path: str | Path | None = None):
        self.dimension = dimension
        self.path = Path(path) if path else None
        self._vectors: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.is_file():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        header = struct.calcsize("<8sIQ")
        if len(data) < header:
            raise DimensionMismatch(f"cache file {self.path} is truncated")
        magic, dimension, count = struct.unpack_from("<8sIQ", data, 0)
        if magic != _CACHE_MAGIC:
            raise DimensionMismatch(f"cache file {self.path} has an unknown format")
        if dimension != self.dimension:
            raise DimensionMismatch(
                f"cache file {self.path} holds {dimension}-d vectors, expected {self.dimension}"
            )
        record = 32 + 8 * dimension
        if len(data) != header + count * record:
            raise DimensionMismatch(f"cache file {self.path} is truncated")
        offset = header
        for _ in range(count):
            key = data[offset : offset + 32]
            vec = np.frombuffer(data, dtype="<f8", count=dimension, offset=offset + 32).copy()
            vec.flags.writeable = False
            self._vectors[key] = vec
            offset += record

    def get(self, key: bytes) -> np.ndarray | None:
        with self._lock:
            return self._vectors.get(key)

    def put(self, key: bytes, vector: np.ndarray) -> None:
        if vector.shape != (self.dimension,):
            raise DimensionMismatch(
                f"vector of shape {vector.shape} does not fit a {self.dimension}-d cache"
            )
        frozen = np.asarray(vector, dtype=np.float64).copy()
        frozen.flags.writeable = False
        with self._lock:
            self._vectors[key] = frozen

    def __len__(self) -> int:
        return len(self._vectors)

    def flush(self) -> None:
        """Persist atomically (write then rename); no-op without a path."""
        if self.path is None:
            return
        with self._lock:
            items = sorted(self._vectors.items())
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with tmp.open("wb") as fh:
            fh.write(struct.pack("<8sIQ", _CACHE_MAGIC, self.dimension, len(items)))
            for key, vec in items:
                fh.write(key)
                fh.write(vec.astype("<f8").tobytes())
        os.replace(tmp, self.path)


class _ProviderBase:
    """Normalization, validation and caching shared by both providers."""

    def __init__(self, dimension: int, cache: EmbeddingCache | None = None):
        self.dimension = dimension
        self.cache = cache if cache is not None else EmbeddingCache(dimension)
        if self.cache.dimension != dimension:
            raise DimensionMismatch("cache dimension disagrees with provider dimension")
        self.compute_calls = 0  # texts actually computed, i.e. cache misses

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        normalized = []
        for text in texts:
            norm = normalize_text(text)
            if not norm:
                raise EmptyText("cannot embed empty text")
            normalized.append(norm)

        out: list[np.ndarray | None] = [None] * len(normalized)
        missing: dict[str, list[int]] = {}
        for i, norm in enumerate(normalized):
            cached = self.cache.get(text_key(norm))
            if cached is not None:
                if cached.shape != (self.dimension,):
                    raise DimensionMismatch("cached vector has the wrong dimension")
                out[i] = cached
            else:
                missing.setdefault(norm, []).append(i)

        if missing:
            unique = list(missing)
            vectors = self._compute(unique)
            self.compute_calls += len(unique)
            for norm, vec in zip(unique, vectors):
                vec = np.asarray(vec, dtype=np.float64)
                if vec.shape != (self.dimension,):
                    raise DimensionMismatch(
                        f"provider returned {vec.shape}, expected ({self.dimension},)"
                    )
                if not np.all(np.isfinite(vec)):
                    raise ProviderUnreachable("provider returned non-finite components")
                self.cache.put(text_key(norm), vec)
                stored = self.cache.get(text_key(norm))
                for i in missing[norm]:
                    out[i] = stored
        return out  # type: ignore[return-value]

    def _compute(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class DeterministicEmbeddingProvider(_ProviderBase):
    """Offline provider: seeded-hash pseudo-random unit vector per text."""

    def __init__(self, dimension: int = 64, cache: EmbeddingCache | None = None):
        super().__init__(dimension, cache)

    def _compute(self, texts: list[str]) -> list[np.ndarray]:
        vectors = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            vectors.append(vec)
        return vectors


class RemoteEmbeddingProvider(_ProviderBase):
    """POST {"texts": [...]} -> {"vectors": [[...], ...]} with bearer auth."""

    def __init__(
        self,
        endpoint: str,
        dimension: int,
        cache: EmbeddingCache | None = None,
        timeout: float = 30.0,
        token: str | None = None,
    ):
        super().__init__(dimension, cache)
        self.endpoint = endpoint
        self.timeout = timeout
        self.token = token if token is not None else os.environ.get(EMBED_TOKEN_ENV, "")

    def _compute(self, texts: list[str]) -> list[np.ndarray]:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                self.endpoint, json={"texts": texts}, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise ProviderUnreachable(f"embedding service at {self.endpoint}: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderUnreachable("embedding service returned a malformed payload")
        return [np.asarray(v, dtype=np.float64) for v in vectors]


# item kinds used as store keys; these match ScoredItem.kind in retrieval
KIND_RELATION = "relation"
KIND_TEXT_UNIT = "text_unit"
KIND_COMMUNITY = "community_summary"


class EmbeddingStore:
    """Vectors for every retrievable index item, keyed by (kind, id)."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self._vectors: dict[tuple[str, str], np.ndarray] = {}

    def put(self, kind: str, item_id: str, vector: np.ndarray) -> None:
        self._vectors[(kind, item_id)] = vector

    def vector(self, kind: str, item_id: str) -> np.ndarray:
        try:
            return self._vectors[(kind, item_id)]
        except KeyError:
            raise NotEmbedded(kind, item_id) from None

    def keys(self, kind: str | None = None) -> list[tuple[str, str]]:
        if kind is None:
            return sorted(self._vectors)
        return sorted(k for k in self._vectors if k[0] == kind)

    def __len__(self) -> int:
        return len(self._vectors)

    def is_empty(self) -> bool:
        return not self._vectors


def embed_index(provider: _ProviderBase, index: KnowledgeIndex) -> EmbeddingStore:
    """Embed every relation description, text unit, and community summary.

    Vectors land in the provider's content-hash cache, so a re-run over an
    unchanged index performs zero provider computations. Call
    ``provider.cache.flush()`` afterwards to persist the sidecar.
    """
    jobs: list[tuple[str, str, str]] = []
    for rid, rel in sorted(index.relations.items()):
        source = index.entities[rel.source].name
        target = index.entities[rel.target].name
        text = rel.description or f"{source} related to {target}"
        jobs.append((KIND_RELATION, rid, text))
    for uid, unit in sorted(index.text_units.items()):
        jobs.append((KIND_TEXT_UNIT, uid, unit.text))
    for cid, community in sorted(index.communities.items()):
        text = community.summary or f"community {cid}"
        jobs.append((KIND_COMMUNITY, cid, text))

    store = EmbeddingStore(provider.dimension)
    if jobs:
        vectors = provider.embed_many([text for _, _, text in jobs])
        for (kind, item_id, _), vec in zip(jobs, vectors):
            store.put(kind, item_id, vec)
    logger.info("embedded %d index items", len(store))
    return store
