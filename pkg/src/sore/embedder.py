"""Text embedding providers.

Two providers sit behind one batching entry point, :func:`embed_texts`:

* ``hashing``: deterministic signed feature hashing of character 3/4/5-grams.
  Dependency-free and hermetic, used by tests and offline runs.
* ``remote``: a generic JSON-over-HTTP client
  (``{"texts": [...], "dim": N}`` -> ``{"vectors": [[...], ...]}``) with
  bearer auth and exponential-backoff retries.

Every provider output is L2-normalised client-side, so downstream code can use
:func:`ip_distance` unconditionally.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import time
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import httpx
import numpy as np

from sore.errors import DimensionMismatch, ProviderUnavailable, TextTooShort

logger = logging.getLogger(__name__)

NGRAM_SIZES = (3, 4, 5)
MAX_TEXT_CHARS = 8000
ENDPOINT_ENV = "SORE_EMBED_ENDPOINT"


@dataclass
class EmbedderConfig:
    provider: str = "hashing"
    dim: int = 256
    batch_size: int = 96
    hashing_seed: int = 0
    remote_endpoint: str | None = None
    remote_auth: str | None = None
    timeout_ms: int = 10_000
    max_retries: int = 3
    backoff_base_ms: int = 200

    def __post_init__(self):
        if self.provider not in ("hashing", "remote"):
            raise ValueError(f"unknown embedding provider {self.provider!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Provider(Protocol):
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dim) array; rows need not be normalised."""
        ...


@lru_cache(maxsize=1 << 18)
def _ngram_hash(gram: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def hash_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Embed ``text`` by signed feature hashing of its character n-grams.

    Each distinct n-gram contributes ``log(1 + count)`` to bucket
    ``hash % dim`` with sign taken from the hash's top bit.
    """
    if dim < 16:
        raise ValueError("dim must be >= 16")
    lowered = text.lower()
    if len(lowered) < NGRAM_SIZES[0]:
        raise TextTooShort(f"need at least {NGRAM_SIZES[0]} characters, got {len(lowered)}")
    counts = Counter(
        lowered[i:i + n] for n in NGRAM_SIZES for i in range(len(lowered) - n + 1)
    )
    hashes = [_ngram_hash(gram, seed) for gram in counts]
    buckets = [h % dim for h in hashes]
    weights = [-math.log1p(c) if h >> 63 else math.log1p(c) for h, c in zip(hashes, counts.values())]
    vec = np.bincount(buckets, weights, minlength=dim)
    first_bucket = buckets[0]
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # every bucket cancelled out; keep the output a unit vector
        vec[first_bucket] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("embedding contains non-finite values")
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalise a zero embedding")
    return (m / norms).astype(np.float32)


class HashingProvider:
    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 16:
            raise ValueError("hashing provider needs dim >= 16")
        self.dim = dim
        self.seed = seed

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([hash_embed(t, self.dim, self.seed) for t in texts])


class RemoteProvider:
    """Client for a generic JSON embedding endpoint.

    Transport errors, timeouts, 429 and 5xx responses are retried with
    exponential backoff; other 4xx responses fail immediately.
    """

    def __init__(self, endpoint: str, dim: int, auth: str | None = None,
                 timeout_ms: int = 10_000, max_retries: int = 3,
                 backoff_base_ms: int = 200, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.dim = dim
        self.max_retries = max_retries
        self.backoff_base = backoff_base_ms / 1000.0
        headers = {"Authorization": f"Bearer {auth}"} if auth else {}
        self._client = httpx.Client(timeout=timeout_ms / 1000.0, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        payload = {"texts": list(texts), "dim": self.dim}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1)
                logger.warning("embedding call failed (%s); retry %d in %.2fs", last_error, attempt, delay)
                time.sleep(delay)
            try:
                resp = self._client.post(self.endpoint, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = ProviderUnavailable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise ProviderUnavailable(f"embedding endpoint rejected request: HTTP {resp.status_code}")
            return self._parse(resp, len(texts))
        raise ProviderUnavailable(f"embedding endpoint unavailable after {self.max_retries + 1} attempts: {last_error}")

    def _parse(self, resp: httpx.Response, expected: int) -> np.ndarray:
        try:
            vectors = resp.json()["vectors"]
            matrix = np.asarray(vectors, dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed embedding response: {exc}") from exc
        if matrix.ndim != 2 or matrix.shape[0] != expected:
            raise ProviderUnavailable(f"expected {expected} vectors, got shape {matrix.shape}")
        if matrix.shape[1] != self.dim:
            raise DimensionMismatch(f"endpoint returned dim {matrix.shape[1]}, expected {self.dim}")
        return matrix


def make_provider(config: EmbedderConfig) -> Provider:
    if config.provider == "hashing":
        return HashingProvider(config.dim, config.hashing_seed)
    endpoint = os.environ.get(ENDPOINT_ENV) or config.remote_endpoint
    if not endpoint:
        raise ValueError(f"remote provider needs remote_endpoint or ${ENDPOINT_ENV}")
    return RemoteProvider(endpoint, config.dim, config.remote_auth, config.timeout_ms,
                          config.max_retries, config.backoff_base_ms)


def truncate(text: str, limit: int = MAX_TEXT_CHARS) -> str:
    return text if len(text) <= limit else text[:limit]


def embed_texts(texts: Sequence[str], config: EmbedderConfig,
                provider: Provider | None = None) -> np.ndarray:
    """Embed ``texts`` in ``config.batch_size`` chunks; returns (n, dim) float32, unit rows."""
    if not texts:
        raise ValueError("texts must be non-empty")
    if any(not t for t in texts):
        raise ValueError("texts must not contain empty strings")
    if provider is None:
        provider = make_provider(config)
    out = np.empty((len(texts), config.dim), dtype=np.float32)
    for start in range(0, len(texts), config.batch_size):
        chunk = [truncate(t) for t in texts[start:start + config.batch_size]]
        raw = np.asarray(provider.embed_batch(chunk))
        if raw.ndim != 2 or raw.shape[1] != config.dim:
            raise DimensionMismatch(f"provider returned shape {raw.shape}, expected (*, {config.dim})")
        out[start:start + len(chunk)] = normalize_rows(raw)
    return out


def ip_distance(a, b) -> float:
    """Inner-product distance ``1 - dot(a, b)``; equals cosine distance for unit vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(1.0 - a @ b)
