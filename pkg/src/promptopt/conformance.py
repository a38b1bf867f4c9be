"""Provider conformance checks shared by every embedding/perplexity backend.

The offline providers, the HTTP clients, and the companion metric-model
service must all satisfy the same contracts. These checks raise
``ConformanceError`` with a specific message on the first violation, so both
the in-repo tests and service deployments can run them unchanged.
"""

from __future__ import annotations

import numpy as np

from . import backends

CONFORMANCE_TEXTS = (
    "the cat sat on the mat",
    "seven plus five equals twelve",
    "a quick brown fox jumps over the lazy dog",
    "numbers 12 and 34 and 56",
)


class ConformanceError(AssertionError):
    """A provider violated its declared contract."""


def verify_embedding_provider(
    provider: backends.EmbeddingProvider,
    texts: tuple[str, ...] = CONFORMANCE_TEXTS,
    repeats: int = 3,
) -> None:
    """Check determinism, unit norm, dimension stability, and self-similarity."""
    dimension = provider.dimension
    for text in texts:
        first = backends.embed(text, provider)
        if first.shape != (dimension,):
            raise ConformanceError(
                f"{provider.name}: dimension drift on {text!r}: {first.shape} vs {dimension}"
            )
        norm = float(np.linalg.norm(first))
        if abs(norm - 1.0) > backends.UNIT_NORM_TOLERANCE:
            raise ConformanceError(f"{provider.name}: norm {norm} for {text!r}")
        for _ in range(repeats - 1):
            again = backends.embed(text, provider)
            if not np.array_equal(first, again):
                raise ConformanceError(f"{provider.name}: non-deterministic embedding for {text!r}")
        self_cosine = float(np.dot(first, first))
        if abs(self_cosine - 1.0) > 1e-9:
            raise ConformanceError(f"{provider.name}: self-cosine {self_cosine} for {text!r}")


def verify_perplexity_provider(
    provider: backends.PerplexityProvider,
    texts: tuple[str, ...] = CONFORMANCE_TEXTS,
    repeats: int = 3,
) -> None:
    """Check the finite, >= 1, deterministic contract."""
    for text in texts:
        first = backends.perplexity(text, provider)
        if not np.isfinite(first) or first < 1.0:
            raise ConformanceError(f"{provider.name}: perplexity {first} for {text!r}")
        for _ in range(repeats - 1):
            again = backends.perplexity(text, provider)
            if again != first:
                raise ConformanceError(
                    f"{provider.name}: non-deterministic perplexity for {text!r}: {first} vs {again}"
                )
