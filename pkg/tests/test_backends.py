"""Metric backend tests: offline providers, HTTP clients, shared conformance."""

from __future__ import annotations

import hashlib

import numpy as np
import pytest

from promptopt.backends import (
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    HttpPerplexityProvider,
    OFFLINE_EMBEDDING_DIMENSION,
    ProviderContractError,
    RepetitionPerplexityProvider,
    embed,
    perplexity,
    token_bucket,
)
from promptopt.conformance import (
    ConformanceError,
    verify_embedding_provider,
    verify_perplexity_provider,
)

# ---------------------------------------------------------------------------
# offline embedding


def test_hash_embedder_deterministic():
    provider = HashEmbeddingProvider()
    a = embed("some text here", provider)
    b = embed("some text here", provider)
    assert np.array_equal(a, b)


def test_hash_embedder_unit_norm():
    provider = HashEmbeddingProvider()
    for text in ("one", "one two three", "lots and lots of words repeated words"):
        assert abs(np.linalg.norm(embed(text, provider)) - 1.0) <= 1e-6


def hash_trace(token: str, dimension: int = OFFLINE_EMBEDDING_DIMENSION) -> int:
    """Standalone recomputation of the versioned token hash."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dimension


def test_disjoint_tokens_embed_orthogonally():
    # verify by hash trace that these tokens occupy distinct buckets
    tokens = ["alpha", "beta", "gamma", "delta"]
    buckets = [hash_trace(t) for t in tokens]
    assert len(set(buckets)) == len(buckets), "pick different test tokens"
    assert all(token_bucket(t, OFFLINE_EMBEDDING_DIMENSION) == b for t, b in zip(tokens, buckets))

    provider = HashEmbeddingProvider()
    cosine = float(np.dot(embed("alpha beta", provider), embed("gamma delta", provider)))
    assert cosine == pytest.approx(0.0, abs=1e-12)


def test_embed_rejects_empty_or_tokenless_text():
    provider = HashEmbeddingProvider()
    with pytest.raises(ValueError):
        embed("   ", provider)
    with pytest.raises(ValueError):
        provider.embed("!!! ???")


def test_embed_validates_dimension_contract():
    class WrongDimension:
        name = "wrong-dim"
        dimension = 8

        def embed(self, text):
            return np.ones(4) / 2.0

    with pytest.raises(ProviderContractError, match="dimension"):
        embed("text", WrongDimension())


def test_embed_validates_norm_contract():
    class NotNormalized:
        name = "not-normalized"
        dimension = 4

        def embed(self, text):
            return np.array([1.0, 1.0, 0.0, 0.0])

    with pytest.raises(ProviderContractError, match="norm"):
        embed("text", NotNormalized())


# ---------------------------------------------------------------------------
# offline perplexity


def test_repetition_perplexity_hand_values():
    provider = RepetitionPerplexityProvider()
    # bigrams of "a a a a": three total, one unique -> repeated fraction 2/3
    assert perplexity("a a a a", provider) == pytest.approx(1.0 + (2 / 3) * 99.0, abs=1e-9)
    assert perplexity("the cat sat on", provider) == pytest.approx(1.0)
    assert perplexity("single", provider) == pytest.approx(1.0)  # no bigrams


def test_repetition_perplexity_ranks_repetition_less_fluent():
    provider = RepetitionPerplexityProvider()
    assert perplexity("go go go go go", provider) > perplexity("we went home early", provider)


def test_perplexity_contract_enforced():
    class BadValue:
        name = "bad-ppl"

        def __init__(self, value):
            self.value = value

        def perplexity(self, text):
            return self.value

    with pytest.raises(ProviderContractError):
        perplexity("text", BadValue(0.5))
    with pytest.raises(ProviderContractError):
        perplexity("text", BadValue(float("nan")))
    with pytest.raises(ValueError):
        perplexity("  ", BadValue(2.0))


# ---------------------------------------------------------------------------
# HTTP providers against the stub service


def test_http_embedding_round_trip(stub_server):
    base_url, state = stub_server
    provider = HttpEmbeddingProvider(base_url)
    vector = embed("hello world", provider)
    assert vector.shape == (state.embed_dimension,)
    assert provider.dimension == state.embed_dimension
    assert np.array_equal(vector, embed("hello world", provider))


def test_http_embedding_dimension_lock(stub_server):
    base_url, state = stub_server
    provider = HttpEmbeddingProvider(base_url)
    embed("first call", provider)
    state.embed_dimension = 16  # service suddenly changes shape
    with pytest.raises(ProviderContractError, match="dimension"):
        embed("second call", provider)


def test_http_perplexity_round_trip(stub_server):
    base_url, state = stub_server
    state.perplexity_value = 3.5
    provider = HttpPerplexityProvider(base_url)
    assert perplexity("hello world", provider) == pytest.approx(3.5)


def test_http_perplexity_contract_violation(stub_server):
    base_url, state = stub_server
    state.perplexity_value = 0.5
    provider = HttpPerplexityProvider(base_url)
    with pytest.raises(ProviderContractError, match="contract"):
        perplexity("hello world", provider)


def test_http_providers_unreachable():
    embed_provider = HttpEmbeddingProvider("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(ProviderContractError, match="unreachable"):
        embed_provider.embed("text")
    ppl_provider = HttpPerplexityProvider("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(ProviderContractError, match="unreachable"):
        ppl_provider.perplexity("text")


# ---------------------------------------------------------------------------
# conformance suite


def test_offline_providers_pass_conformance():
    verify_embedding_provider(HashEmbeddingProvider())
    verify_perplexity_provider(RepetitionPerplexityProvider())


def test_http_providers_pass_conformance(stub_server):
    base_url, _ = stub_server
    verify_embedding_provider(HttpEmbeddingProvider(base_url))
    verify_perplexity_provider(HttpPerplexityProvider(base_url))


def test_conformance_catches_violations():
    class Drifting:
        name = "drifting"
        dimension = 4

        def __init__(self):
            self.flip = False

        def embed(self, text):
            self.flip = not self.flip
            v = np.array([1.0, 1.0, 0.0, 0.0]) if self.flip else np.array([1.0, 0.0, 1.0, 0.0])
            return v / np.linalg.norm(v)

    with pytest.raises(ConformanceError, match="non-deterministic"):
        verify_embedding_provider(Drifting())
