"""Task classification and dynamic metric selection.

A dataset example is classified into a task type, then an LLM is asked to pick
metrics and weights suited to that type. Both steps are total: a deterministic
keyword classifier and a static fallback weight table guarantee a valid answer
for any provider behavior, including permanent failure.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass

from .assets import load_asset_text
from .gateway import CompletionProvider, CompletionRequest
from .metrics import MetricKind, MetricPlan, normalize_weights
from .text import tokenize

logger = logging.getLogger(__name__)


class TaskType(enum.Enum):
    ARITHMETIC_REASONING = "arithmetic_reasoning"
    MULTI_STEP_REASONING = "multi_step_reasoning"
    LANGUAGE_UNDERSTANDING = "language_understanding"
    CREATIVE_GENERATION = "creative_generation"
    REAL_WORLD_PROBLEM = "real_world_problem"
    UNKNOWN = "unknown"

    @classmethod
    def from_label(cls, label: str) -> "TaskType":
        """Total parse: any unrecognized label maps to UNKNOWN."""
        try:
            return cls(label.strip().lower())
        except ValueError:
            return cls.UNKNOWN


@dataclass(frozen=True)
class TaskProfile:
    """The classified task plus the dataset sample that drove classification."""

    task_type: TaskType
    sample: tuple[str, str]
    source: str  # "llm" or "rules"

    def __post_init__(self) -> None:
        if not self.sample[0].strip():
            raise ValueError("sample question must be non-empty")
        if self.source not in ("llm", "rules"):
            raise ValueError(f"source must be 'llm' or 'rules', got {self.source!r}")


# Weight tables used when the LLM gives no parseable metric selection.
# Factual/reasoning tasks put similarity on top; creative tasks put diversity
# well above its (zero) weight for arithmetic. Overridable via run config.
DEFAULT_FALLBACK_PLANS: dict[TaskType, tuple[tuple[MetricKind, float], ...]] = {
    TaskType.ARITHMETIC_REASONING: (
        (MetricKind.SIMILARITY, 0.7),
        (MetricKind.COMPLEXITY, 0.3),
    ),
    TaskType.MULTI_STEP_REASONING: (
        (MetricKind.SIMILARITY, 0.7),
        (MetricKind.COMPLEXITY, 0.3),
    ),
    TaskType.CREATIVE_GENERATION: (
        (MetricKind.DIVERSITY, 0.5),
        (MetricKind.FLUENCY, 0.3),
        (MetricKind.SIMILARITY, 0.2),
    ),
    TaskType.LANGUAGE_UNDERSTANDING: (
        (MetricKind.SIMILARITY, 0.6),
        (MetricKind.FLUENCY, 0.4),
    ),
    TaskType.REAL_WORLD_PROBLEM: (
        (MetricKind.SIMILARITY, 0.4),
        (MetricKind.FLUENCY, 0.2),
        (MetricKind.DIVERSITY, 0.2),
        (MetricKind.COMPLEXITY, 0.2),
    ),
    TaskType.UNKNOWN: (
        (MetricKind.SIMILARITY, 0.4),
        (MetricKind.FLUENCY, 0.2),
        (MetricKind.DIVERSITY, 0.2),
        (MetricKind.COMPLEXITY, 0.2),
    ),
}

_NUMBER_WORDS = frozenset(
    "zero one two three four five six seven eight nine ten eleven twelve "
    "twenty thirty forty fifty hundred thousand".split()
)
_OPERATOR_RE = re.compile(r"[+*/=%]|\d\s*-|-\s*\d")
_LANGUAGE_KEYWORDS = frozenset({"translate", "translation", "translated", "error", "errors", "grammar"})
_CREATIVE_KEYWORDS = frozenset({"story", "stories", "poem", "poems", "essay", "fiction"})


def classify_task_rules(sample: tuple[str, str]) -> TaskType:
    """Deterministic keyword classifier, applied in fixed priority order.

    Numeric signals win first (so a numeric question mentioning "step" is
    still arithmetic), then the "step" keyword, then language keywords, then
    creative keywords, else real-world.
    """
    question = sample[0]
    if not question.strip():
        raise ValueError("question must be non-empty")
    tokens = set(tokenize(question))
    has_numeric = (
        bool(re.search(r"\d", question))
        or bool(tokens & _NUMBER_WORDS)
        or bool(_OPERATOR_RE.search(question))
    )
    if has_numeric:
        return TaskType.ARITHMETIC_REASONING
    if "step" in tokens or "steps" in tokens:
        return TaskType.MULTI_STEP_REASONING
    if tokens & _LANGUAGE_KEYWORDS:
        return TaskType.LANGUAGE_UNDERSTANDING
    if tokens & _CREATIVE_KEYWORDS:
        return TaskType.CREATIVE_GENERATION
    return TaskType.REAL_WORLD_PROBLEM


def render_template(template: str, values: dict[str, str]) -> str:
    """Fill ``{name}`` placeholders by literal replacement.

    Literal replacement rather than str.format so braces inside questions or
    prompts never break rendering.
    """
    rendered = template
    for name, value in values.items():
        rendered = rendered.replace("{" + name + "}", value)
    return rendered


def default_classification_template() -> str:
    return load_asset_text("classification_template.txt")


def default_selection_template() -> str:
    return load_asset_text("selection_template.txt")


_EXACT_LABELS = {t.value: t for t in TaskType}


def classify_task(
    sample: tuple[str, str],
    llm: CompletionProvider,
    template: str | None = None,
    model_name: str = "default",
    temperature: float = 0.1,
) -> TaskProfile:
    """Classify via the LLM, falling back to keyword rules on any trouble.

    The response must be exactly one known label (after trimming and
    lowercasing); anything else counts as a parse failure.
    """
    question, reference = sample
    if not question.strip():
        raise ValueError("sample question must be non-empty")
    template = template or default_classification_template()
    request = CompletionRequest(
        user_text=render_template(template, {"question": question, "reference": reference}),
        temperature=temperature,
        model_name=model_name,
    )
    try:
        answer = llm.complete(request).text
    except Exception as exc:
        logger.debug("classification provider failed, using rules: %s", exc)
        return TaskProfile(classify_task_rules(sample), sample, source="rules")

    label = answer.strip().lower().strip(".\"'` ")
    if label in _EXACT_LABELS:
        return TaskProfile(_EXACT_LABELS[label], sample, source="llm")
    logger.debug("unparseable classification %r, using rules", answer)
    return TaskProfile(classify_task_rules(sample), sample, source="rules")


_SELECTION_LINE_RE = re.compile(r"^\s*([a-z_]+)\s*=\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*$")


def parse_metric_selection(response: str) -> MetricPlan | None:
    """Parse a line-oriented "kind=weight" response into a plan, or None.

    Strict: every non-blank line must parse, kinds must be among the four
    known metrics with no duplicates, weights positive and finite. Returns
    None on any violation so the caller can fall back.
    """
    raw: list[tuple[MetricKind, float]] = []
    seen: set[MetricKind] = set()
    lines = [line for line in response.splitlines() if line.strip()]
    if not lines:
        return None
    for line in lines:
        match = _SELECTION_LINE_RE.match(line)
        if not match:
            return None
        try:
            kind = MetricKind.from_name(match.group(1))
            weight = float(match.group(2))
        except ValueError:
            return None
        if kind in seen:
            return None
        seen.add(kind)
        raw.append((kind, weight))
    try:
        return normalize_weights(raw)
    except (ValueError, OverflowError):
        return None


def fallback_plan(
    task_type: TaskType,
    table: dict[TaskType, tuple[tuple[MetricKind, float], ...]] | None = None,
) -> MetricPlan:
    """The static plan for a task type from the (possibly overridden) table."""
    table = table or DEFAULT_FALLBACK_PLANS
    return normalize_weights(list(table[task_type]))


def select_metrics(
    profile: TaskProfile,
    llm: CompletionProvider,
    template: str | None = None,
    fallback_table: dict[TaskType, tuple[tuple[MetricKind, float], ...]] | None = None,
    model_name: str = "default",
    temperature: float = 0.1,
) -> MetricPlan:
    """Ask the LLM for a metric/weight list; fall back to the static table.

    Total by construction: any provider error or unparseable response yields
    the fallback plan for the profile's task type.
    """
    template = template or default_selection_template()
    request = CompletionRequest(
        user_text=render_template(
            template,
            {"task_type": profile.task_type.value, "question": profile.sample[0]},
        ),
        temperature=temperature,
        model_name=model_name,
    )
    try:
        answer = llm.complete(request).text
    except Exception as exc:
        logger.debug("selection provider failed, using fallback table: %s", exc)
        return fallback_plan(profile.task_type, fallback_table)

    plan = parse_metric_selection(answer)
    if plan is None:
        logger.debug("unparseable metric selection %r, using fallback table", answer)
        return fallback_plan(profile.task_type, fallback_table)
    return plan
