"""Shared text tokenization used by metrics and the offline embedding provider.

Tokenization is deliberately crude: lowercase, then take maximal runs of
letters and digits, dropping whitespace and punctuation. Crude is the point,
the same byte sequence must tokenize identically everywhere (scores, hashes,
oracles), on any platform.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split text into lowercase alphanumeric tokens.

    Punctuation and underscores act as boundaries, so "don't" yields
    ["don", "t"] and "8-2" yields ["8", "2"].
    """
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    """All contiguous n-grams of the token list, in order. Empty if too short."""
    if n <= 0:
        raise ValueError(f"n-gram order must be positive, got {n}")
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]
