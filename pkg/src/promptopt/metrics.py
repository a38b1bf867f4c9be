"""Multi-metric prompt scoring: four text metrics fused into one scalar.

The fused score of a prompt is the weighted sum of its per-metric scores,
S = sum_i w_i * M_i, with weights normalized to 1 so S stays in [0, 1] and is
comparable across metric plans. The four metrics:

* similarity: cosine between embeddings of candidate and reference text,
  clamped at 0.
* diversity: mean distinct-n over configured n-gram orders (unique / total).
* fluency: 1 / (1 + ln p) where p is model perplexity; monotone decreasing,
  bounded, parameter-free.
* complexity: mean of three capped ratios over token count, clause-marker
  count, and step-marker count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .gateway import CompletionProvider, CompletionRequest
from .text import ngrams, tokenize

WEIGHT_SUM_TOLERANCE = 1e-9
FUSED_TOLERANCE = 1e-9

DEFAULT_DIVERSITY_ORDERS = (1, 2)

# Coordinating/causal connectives counted as clause markers.
DEFAULT_CLAUSE_MARKERS = (
    "because", "although", "while", "since", "if", "unless",
    "whereas", "therefore", "however", "so",
)
# Sequencing words counted as reasoning-step markers.
DEFAULT_STEP_MARKERS = (
    "first", "second", "third", "then", "next",
    "finally", "step", "steps", "lastly", "initially",
)


class MetricError(Exception):
    """A metric could not be computed for the given inputs."""


class MetricKind(enum.Enum):
    """The four supported metrics. Parsing any other name fails."""

    SIMILARITY = "similarity"
    DIVERSITY = "diversity"
    FLUENCY = "fluency"
    COMPLEXITY = "complexity"

    @classmethod
    def from_name(cls, name: str) -> "MetricKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown metric kind: {name!r}") from None


@dataclass(frozen=True)
class MetricPlan:
    """A weighted metric set; the output of metric selection.

    Invariants enforced at construction: 1..4 entries, no duplicate kinds,
    every weight positive, weights summing to 1 within 1e-9.
    """

    entries: tuple[tuple[MetricKind, float], ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.entries) <= 4:
            raise ValueError(f"plan must have 1..4 entries, got {len(self.entries)}")
        kinds = [kind for kind, _ in self.entries]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate metric kinds in plan: {kinds}")
        for kind, weight in self.entries:
            if not math.isfinite(weight) or weight <= 0:
                raise ValueError(f"weight for {kind.value} must be positive, got {weight}")
        total = sum(weight for _, weight in self.entries)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"weights must sum to 1 within {WEIGHT_SUM_TOLERANCE}, got {total}")

    @property
    def kinds(self) -> tuple[MetricKind, ...]:
        return tuple(kind for kind, _ in self.entries)

    def weight(self, kind: MetricKind) -> float:
        for entry_kind, weight in self.entries:
            if entry_kind is kind:
                return weight
        raise KeyError(kind)

    def as_dict(self) -> dict[str, float]:
        return {kind.value: weight for kind, weight in self.entries}


MetricScores = dict[MetricKind, float]


def normalize_weights(raw: list[tuple[MetricKind, float]]) -> MetricPlan:
    """Scale raw positive weights so they sum to 1, preserving their ratios."""
    if not raw:
        raise ValueError("cannot normalize an empty weight list")
    for kind, weight in raw:
        if not math.isfinite(weight) or weight <= 0:
            raise ValueError(f"weight for {kind.value} must be positive, got {weight}")
    total = sum(weight for _, weight in raw)
    return MetricPlan(entries=tuple((kind, weight / total) for kind, weight in raw))


def fuse_scores(plan: MetricPlan, scores: MetricScores) -> float:
    """Weighted sum of per-metric scores under the plan."""
    fused = 0.0
    for kind, weight in plan.entries:
        if kind not in scores:
            raise MetricError(f"missing score for plan metric {kind.value}")
        value = scores[kind]
        if not math.isfinite(value):
            raise MetricError(f"non-finite score for {kind.value}: {value}")
        fused += weight * value
    return fused


# ---------------------------------------------------------------------------
# Individual metrics


def similarity_score(
    candidate_text: str,
    reference_text: str,
    embedder: backends.EmbeddingProvider,
) -> float:
    """Cosine similarity of the two texts' embeddings, clamped to [0, 1].

    Negative cosine clamps to 0 so the score composes with the other metrics;
    symmetric in its two arguments.
    """
    if not candidate_text.strip() or not reference_text.strip():
        raise MetricError("similarity requires two non-empty texts")
    a = backends.embed(candidate_text, embedder)
    b = backends.embed(reference_text, embedder)
    cosine = float(np.dot(a, b))
    return max(0.0, min(1.0, cosine))


def diversity_score(text: str, ngram_orders=DEFAULT_DIVERSITY_ORDERS) -> float:
    """Mean distinct-n over the given orders: unique n-grams / total n-grams."""
    orders = sorted(set(int(n) for n in ngram_orders))
    if not orders:
        raise MetricError("diversity requires at least one n-gram order")
    if any(n <= 0 for n in orders):
        raise MetricError(f"n-gram orders must be positive: {orders}")
    tokens = tokenize(text)
    if len(tokens) < orders[-1]:
        raise MetricError(
            f"text has {len(tokens)} tokens, fewer than largest n-gram order {orders[-1]}"
        )
    ratios = []
    for n in orders:
        grams = ngrams(tokens, n)
        ratios.append(len(set(grams)) / len(grams))
    return sum(ratios) / len(ratios)


def fluency_score(text: str, ppl_provider: backends.PerplexityProvider) -> float:
    """Map provider perplexity p >= 1 to (0, 1] via 1 / (1 + ln p).

    Strictly decreasing in p, hits 1 at the p = 1 lower bound, and needs no
    tuning constants.
    """
    if not text.strip():
        raise MetricError("fluency requires non-empty text")
    p = backends.perplexity(text, ppl_provider)
    return 1.0 / (1.0 + math.log(p))


@dataclass(frozen=True)
class ComplexityConfig:
    """Caps and marker word lists for the complexity metric."""

    max_tokens: int = 100
    clause_cap: int = 5
    step_cap: int = 5
    clause_markers: tuple[str, ...] = DEFAULT_CLAUSE_MARKERS
    step_markers: tuple[str, ...] = DEFAULT_STEP_MARKERS

    def __post_init__(self) -> None:
        if self.max_tokens <= 0 or self.clause_cap <= 0 or self.step_cap <= 0:
            raise ValueError("complexity caps must all be positive")


def complexity_score(text: str, config: ComplexityConfig = ComplexityConfig()) -> float:
    """Mean of three capped ratios: length, clause markers, step markers."""
    if not text.strip():
        raise MetricError("complexity requires non-empty text")
    tokens = tokenize(text)
    clause_set = set(config.clause_markers)
    step_set = set(config.step_markers)
    clause_count = sum(1 for token in tokens if token in clause_set)
    step_count = sum(1 for token in tokens if token in step_set)
    length_part = min(1.0, len(tokens) / config.max_tokens)
    clause_part = min(1.0, clause_count / config.clause_cap)
    step_part = min(1.0, step_count / config.step_cap)
    return (length_part + clause_part + step_part) / 3.0


# ---------------------------------------------------------------------------
# Prompt scoring


@dataclass(frozen=True)
class Prompt:
    """A candidate instruction plus its provenance in the evolution run."""

    text: str
    id: str
    generation: int = 0
    parent_id: str | None = None
    mutation_note: str | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("prompt text must be non-empty")
        if self.generation < 0:
            raise ValueError("generation must be non-negative")
        if self.generation == 0 and self.parent_id is not None:
            raise ValueError("generation-0 prompts have no parent")
        if self.generation > 0 and self.parent_id is None:
            raise ValueError("evolved prompts must name a parent")


@dataclass(frozen=True)
class ScoredPrompt:
    """A prompt with its per-metric scores and fused score under some plan."""

    prompt: Prompt
    scores: MetricScores
    fused: float


def make_scored_prompt(prompt: Prompt, plan: MetricPlan, scores: MetricScores) -> ScoredPrompt:
    """Build a ScoredPrompt whose fused value is consistent with the plan."""
    if set(scores) != set(plan.kinds):
        raise MetricError(
            f"scores cover {sorted(k.value for k in scores)}, "
            f"plan needs {sorted(k.value for k in plan.kinds)}"
        )
    return ScoredPrompt(prompt=prompt, scores=dict(scores), fused=fuse_scores(plan, scores))


@dataclass(frozen=True)
class MetricProviders:
    """Everything the metrics need besides the texts themselves.

    ``embedder`` may be None only for plans without similarity; likewise
    ``ppl`` for plans without fluency.
    """

    embedder: backends.EmbeddingProvider | None = None
    ppl: backends.PerplexityProvider | None = None
    diversity_orders: tuple[int, ...] = DEFAULT_DIVERSITY_ORDERS
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)


def score_output(
    output_text: str,
    reference_text: str,
    plan: MetricPlan,
    providers: MetricProviders,
) -> MetricScores:
    """Compute every plan metric for one model output against its reference."""
    scores: MetricScores = {}
    for kind in plan.kinds:
        if kind is MetricKind.SIMILARITY:
            if providers.embedder is None:
                raise MetricError("plan includes similarity but no embedder is configured")
            scores[kind] = similarity_score(output_text, reference_text, providers.embedder)
        elif kind is MetricKind.DIVERSITY:
            scores[kind] = diversity_score(output_text, providers.diversity_orders)
        elif kind is MetricKind.FLUENCY:
            if providers.ppl is None:
                raise MetricError("plan includes fluency but no perplexity provider is configured")
            scores[kind] = fluency_score(output_text, providers.ppl)
        elif kind is MetricKind.COMPLEXITY:
            scores[kind] = complexity_score(output_text, providers.complexity)
    return scores


@dataclass(frozen=True)
class EvaluationContext:
    """The sample a prompt is scored against, plus provider wiring.

    ``samples`` holds (question, reference) pairs; the candidate output for
    each question is obtained by sending "prompt text, blank line, question"
    to the completion provider.
    """

    samples: tuple[tuple[str, str], ...]
    llm: CompletionProvider
    providers: MetricProviders
    model_name: str = "default"
    temperature: float = 0.1
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("evaluation context needs at least one sample")


def compose_user_text(prompt_text: str, question: str) -> str:
    """The prompt/question composition sent to the model: plain concatenation
    with one blank line between them."""
    return f"{prompt_text}\n\n{question}"


def score_prompt(prompt: Prompt, plan: MetricPlan, context: EvaluationContext) -> ScoredPrompt:
    """Score one prompt over the context's samples and fuse the result.

    Per-metric scores are averaged arithmetically across samples before
    fusion. Any metric or provider failure aborts with the sample question
    attached, so a bad item is diagnosable.
    """
    totals = {kind: 0.0 for kind in plan.kinds}
    for question, reference in context.samples:
        request = CompletionRequest(
            user_text=compose_user_text(prompt.text, question),
            temperature=context.temperature,
            max_tokens=context.max_tokens,
            model_name=context.model_name,
        )
        output = context.llm.complete(request).text
        try:
            sample_scores = score_output(output, reference, plan, context.providers)
        except (MetricError, backends.ProviderContractError, ValueError) as exc:
            raise MetricError(f"scoring failed on question {question!r}: {exc}") from exc
        for kind, value in sample_scores.items():
            totals[kind] += value
    n = len(context.samples)
    averaged = {kind: total / n for kind, total in totals.items()}
    return make_scored_prompt(prompt, plan, averaged)
