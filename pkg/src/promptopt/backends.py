"""Embedding and perplexity providers backing the similarity and fluency metrics.

Two families per contract: an HTTP client for the companion metric-model
service (POST /embed, POST /perplexity), and fully deterministic offline
providers for tests and air-gapped runs. Both families satisfy identical
contracts: embeddings are finite, fixed-dimension, unit-norm; perplexities are
finite and >= 1.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np
import requests

from .text import ngrams, tokenize

OFFLINE_EMBEDDING_DIMENSION = 256
# Version tag for the offline token hash. Bump if the hashing scheme changes;
# frozen test oracles depend on it.
OFFLINE_HASH_VERSION = "sha256-bow-v1"

UNIT_NORM_TOLERANCE = 1e-6


class ProviderContractError(Exception):
    """A provider returned something outside its declared contract."""


class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class PerplexityProvider(Protocol):
    name: str

    def perplexity(self, text: str) -> float: ...


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed ``text``; validates the provider's unit-norm and finiteness contract."""
    if not text.strip():
        raise ValueError("cannot embed empty text")
    vector = np.asarray(provider.embed(text), dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != provider.dimension:
        raise ProviderContractError(
            f"{provider.name}: expected dimension {provider.dimension}, got shape {vector.shape}"
        )
    if not np.all(np.isfinite(vector)):
        raise ProviderContractError(f"{provider.name}: non-finite embedding values")
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        raise ProviderContractError(f"{provider.name}: embedding norm {norm} is not 1")
    return vector


def perplexity(text: str, provider: PerplexityProvider) -> float:
    """Score ``text``'s perplexity; validates the finite, >= 1 contract."""
    if not text.strip():
        raise ValueError("cannot score empty text")
    value = float(provider.perplexity(text))
    if not np.isfinite(value) or value < 1.0:
        raise ProviderContractError(f"{provider.name}: perplexity {value} violates >= 1 contract")
    return value


def token_bucket(token: str, dimension: int) -> int:
    """Stable hash bucket for a token (scheme OFFLINE_HASH_VERSION).

    First 8 bytes of SHA-256 of the UTF-8 token, big-endian, mod dimension.
    Independent of PYTHONHASHSEED and platform.
    """
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dimension


class HashEmbeddingProvider:
    """Offline bag-of-words embedder: each token hashes into one of
    ``dimension`` buckets, counts are L2-normalized.

    Test-grade semantics only: real semantic similarity needs the metric-model
    service. Its value is that identical texts embed identically everywhere.
    """

    def __init__(self, dimension: int = OFFLINE_EMBEDDING_DIMENSION) -> None:
        if dimension <= 0:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.name = f"hash-embed-{OFFLINE_HASH_VERSION}"

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"text has no tokens to embed: {text!r}")
        vector = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            vector[token_bucket(token, self.dimension)] += 1.0
        return vector / np.linalg.norm(vector)


class RepetitionPerplexityProvider:
    """Offline perplexity proxy: 1 + (repeated-bigram fraction) * 99.

    Not a language model. Its only job is to hand tests a deterministic score
    that is monotone in repetitiveness, so repetitive text ranks as less
    fluent. Texts with fewer than two tokens have no bigrams and score 1.
    """

    name = "repetition-ppl"

    def perplexity(self, text: str) -> float:
        tokens = tokenize(text)
        bigrams = ngrams(tokens, 2)
        if not bigrams:
            return 1.0
        repeated_fraction = 1.0 - len(set(bigrams)) / len(bigrams)
        return 1.0 + repeated_fraction * 99.0


class HttpEmbeddingProvider:
    """Client for the metric-model service's POST /embed endpoint.

    Sends ``{"texts": [text]}`` and reads ``{"vectors": [[...]]}``. The
    provider's dimension locks to the first response unless configured, and
    any later mismatch is a contract error.
    """

    def __init__(
        self,
        base_url: str,
        dimension: int | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.name = f"http-embed({self.base_url})"
        self._dimension = dimension
        self.timeout = timeout
        self._session = session or requests.Session()

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            # Locks the dimension by embedding a probe text once.
            self.embed("dimension probe")
        assert self._dimension is not None
        return self._dimension

    def embed(self, text: str) -> np.ndarray:
        try:
            response = self._session.post(
                f"{self.base_url}/embed", json={"texts": [text]}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ProviderContractError(f"{self.name}: service unreachable: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise ProviderContractError(
                f"{self.name}: HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            vectors = response.json()["vectors"]
            vector = np.asarray(vectors[0], dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderContractError(f"{self.name}: malformed /embed response: {exc}") from exc
        if self._dimension is None:
            self._dimension = int(vector.shape[0])
        elif vector.shape[0] != self._dimension:
            raise ProviderContractError(
                f"{self.name}: dimension changed from {self._dimension} to {vector.shape[0]}"
            )
        return vector


class HttpPerplexityProvider:
    """Client for the metric-model service's POST /perplexity endpoint.

    Sends ``{"text": ...}`` and reads ``{"perplexity": ...}``. Values below 1
    or non-finite are contract violations, not data.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.name = f"http-ppl({self.base_url})"
        self.timeout = timeout
        self._session = session or requests.Session()

    def perplexity(self, text: str) -> float:
        try:
            response = self._session.post(
                f"{self.base_url}/perplexity", json={"text": text}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ProviderContractError(f"{self.name}: service unreachable: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise ProviderContractError(
                f"{self.name}: HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            value = float(response.json()["perplexity"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderContractError(
                f"{self.name}: malformed /perplexity response: {exc}"
            ) from exc
        return value
