"""Dataset loading, prompt evaluation runs, and the ablation pipeline.

``run_eval`` sends every dataset item through the completion provider with the
prompt prepended, scores each output against the item's reference, and
aggregates arithmetic means. ``run_ablation`` wires the full pipeline
(classify, select metrics, evolve, evaluate) and its two reduced variants:
``no_prompt_optimization`` swaps the evolved prompt for the generic
step-by-step prompt, ``single_metric`` forces a similarity-only plan while
keeping evolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .evolution import (
    EvolutionConfig,
    GenerationLog,
    StrategyLibrary,
    default_strategy_library,
    evolve,
)
from .gateway import CompletionProvider, CompletionRequest
from .metrics import (
    EvaluationContext,
    MetricKind,
    MetricPlan,
    MetricProviders,
    MetricScores,
    Prompt,
    compose_user_text,
    fuse_scores,
    score_output,
)
from .selection import TaskProfile, classify_task, select_metrics

GENERIC_PROMPT = "Let's think step by step."

ABLATION_MODES = ("none", "no_prompt_optimization", "single_metric")

# Runs abort once this fraction of items has failed; below it, failed items
# are recorded and excluded from the means.
FAILURE_ABORT_FRACTION = 0.10

DEFAULT_DEV_FRACTION = 0.2


class DatasetError(Exception):
    """A dataset file is missing, unreadable, or malformed."""


class EvalRunError(Exception):
    """An evaluation run could not produce a report."""


@dataclass(frozen=True)
class DatasetItem:
    id: str
    question: str
    reference: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("item id must be non-empty")
        if not self.question.strip() or not self.reference.strip():
            raise ValueError(f"item {self.id}: question and reference must be non-empty")


def load_dataset(path: str | Path, limit: int | None = None) -> list[DatasetItem]:
    """Load line-delimited JSON records with id/question/reference fields.

    Items come back in file order, truncated to ``limit`` if given. Every
    parse problem names the offending line.
    """
    if limit is not None and limit <= 0:
        raise ValueError(f"limit must be positive, got {limit}")
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc

    items: list[DatasetItem] = []
    seen_ids: dict[str, int] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise DatasetError(f"{path}:{lineno}: record must be an object")
        try:
            item = DatasetItem(
                id=str(record["id"]),
                question=str(record["question"]),
                reference=str(record["reference"]),
            )
        except KeyError as exc:
            raise DatasetError(f"{path}:{lineno}: missing field {exc.args[0]!r}")
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}")
        if item.id in seen_ids:
            raise DatasetError(
                f"{path}:{lineno}: duplicate id {item.id!r} (first seen on line {seen_ids[item.id]})"
            )
        seen_ids[item.id] = lineno
        items.append(item)
        if limit is not None and len(items) >= limit:
            break
    return items


@dataclass(frozen=True)
class EvalRecord:
    """Per-item outcome: the model output and its scores under the run's plan."""

    item_id: str
    model_output: str
    scores: MetricScores
    fused: float


@dataclass(frozen=True)
class EvalReport:
    """Aggregate over one evaluation run.

    ``similarity_percent`` mirrors the reporting convention of expressing
    mean similarity as a percentage; None when the plan has no similarity.
    """

    dataset_name: str
    prompt_text: str
    item_count: int
    mean_scores: dict[MetricKind, float]
    mean_fused: float
    similarity_percent: float | None
    failures: int = 0


def run_eval(
    prompt: Prompt,
    items: list[DatasetItem],
    plan: MetricPlan,
    llm: CompletionProvider,
    providers: MetricProviders,
    dataset_name: str = "dataset",
    model_name: str = "default",
    temperature: float = 0.1,
    max_tokens: int = 512,
) -> tuple[EvalReport, list[EvalRecord]]:
    """Evaluate one prompt over the items and aggregate arithmetic means.

    Aborts as soon as the failed-item fraction reaches
    FAILURE_ABORT_FRACTION; below that, failures are skipped and excluded
    from the means. Means use exact summation so item order cannot change
    the report.
    """
    if not items:
        raise ValueError("run_eval needs at least one item")
    abort_at = max(1, math.ceil(FAILURE_ABORT_FRACTION * len(items)))

    records: list[EvalRecord] = []
    failure_messages: list[str] = []
    for item in items:
        try:
            request = CompletionRequest(
                user_text=compose_user_text(prompt.text, item.question),
                temperature=temperature,
                max_tokens=max_tokens,
                model_name=model_name,
            )
            output = llm.complete(request).text
            scores = score_output(output, item.reference, plan, providers)
            records.append(
                EvalRecord(
                    item_id=item.id,
                    model_output=output,
                    scores=scores,
                    fused=fuse_scores(plan, scores),
                )
            )
        except Exception as exc:
            failure_messages.append(f"item {item.id}: {exc}")
            if len(failure_messages) >= abort_at:
                raise EvalRunError(
                    f"{len(failure_messages)}/{len(items)} items failed "
                    f"(abort threshold {FAILURE_ABORT_FRACTION:.0%}); first: {failure_messages[0]}"
                ) from exc

    mean_scores = {
        kind: math.fsum(r.scores[kind] for r in records) / len(records)
        for kind in plan.kinds
    }
    mean_fused = math.fsum(r.fused for r in records) / len(records)
    similarity_percent = (
        100.0 * mean_scores[MetricKind.SIMILARITY]
        if MetricKind.SIMILARITY in mean_scores
        else None
    )
    report = EvalReport(
        dataset_name=dataset_name,
        prompt_text=prompt.text,
        item_count=len(records),
        mean_scores=mean_scores,
        mean_fused=mean_fused,
        similarity_percent=similarity_percent,
        failures=len(failure_messages),
    )
    return report, records


def split_items(
    items: list[DatasetItem], dev_fraction: float = DEFAULT_DEV_FRACTION
) -> tuple[list[DatasetItem], list[DatasetItem]]:
    """Fitness/evaluation split: the first dev_fraction of items (at least
    one) drives evolution, the remainder feeds the report."""
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    dev_count = max(1, int(len(items) * dev_fraction))
    dev, holdout = items[:dev_count], items[dev_count:]
    if not holdout:
        raise EvalRunError(
            f"dataset with {len(items)} items leaves no held-out split at "
            f"dev_fraction {dev_fraction}"
        )
    return dev, holdout


@dataclass(frozen=True)
class PipelineResult:
    mode: str
    profile: TaskProfile
    plan: MetricPlan
    best_prompt: Prompt
    logs: tuple[GenerationLog, ...]
    report: EvalReport
    records: tuple[EvalRecord, ...]


def run_ablation(
    mode: str,
    items: list[DatasetItem],
    llm: CompletionProvider,
    providers: MetricProviders,
    evolution_config: EvolutionConfig,
    library: StrategyLibrary | None = None,
    dataset_name: str = "dataset",
    model_name: str = "default",
    temperature: float = 0.1,
    max_tokens: int = 512,
    dev_fraction: float = DEFAULT_DEV_FRACTION,
    selection_samples: int = 1,
    classification_template: str | None = None,
    selection_template: str | None = None,
    init_template: str | None = None,
    mutation_template: str | None = None,
    fallback_table=None,
) -> PipelineResult:
    """Run the pipeline in one of its three modes over the dataset.

    All modes share the same dev/holdout split so their reports are
    comparable item-for-item.
    """
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")
    if not items:
        raise ValueError("pipeline needs a non-empty dataset")
    if selection_samples < 1:
        raise ValueError("selection_samples must be >= 1")

    question_block = "\n\n".join(item.question for item in items[:selection_samples])
    sample = (question_block, items[0].reference)
    profile = classify_task(
        sample, llm,
        template=classification_template, model_name=model_name, temperature=temperature,
    )

    if mode == "single_metric":
        plan = MetricPlan(entries=((MetricKind.SIMILARITY, 1.0),))
    else:
        plan = select_metrics(
            profile, llm,
            template=selection_template, fallback_table=fallback_table,
            model_name=model_name, temperature=temperature,
        )

    dev, holdout = split_items(items, dev_fraction)

    if mode == "no_prompt_optimization":
        best_prompt = Prompt(text=GENERIC_PROMPT, id="generic", generation=0)
        logs: tuple[GenerationLog, ...] = ()
    else:
        context = EvaluationContext(
            samples=tuple((item.question, item.reference) for item in dev),
            llm=llm,
            providers=providers,
            model_name=model_name,
            temperature=temperature,
            max_tokens=max_tokens,
        )
        best, log_list = evolve(
            profile, context, plan,
            library or default_strategy_library(), llm, evolution_config,
            init_template=init_template, mutation_template=mutation_template,
        )
        best_prompt = best.prompt
        logs = tuple(log_list)

    report, records = run_eval(
        best_prompt, holdout, plan, llm, providers,
        dataset_name=dataset_name, model_name=model_name,
        temperature=temperature, max_tokens=max_tokens,
    )
    return PipelineResult(
        mode=mode,
        profile=profile,
        plan=plan,
        best_prompt=best_prompt,
        logs=logs,
        report=report,
        records=tuple(records),
    )


# ---------------------------------------------------------------------------
# Serialization


def record_to_dict(record: EvalRecord) -> dict:
    return {
        "item_id": record.item_id,
        "model_output": record.model_output,
        "scores": {k.value: v for k, v in sorted(record.scores.items(), key=lambda kv: kv[0].value)},
        "fused": record.fused,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "dataset": report.dataset_name,
        "prompt": report.prompt_text,
        "item_count": report.item_count,
        "mean_scores": {k.value: v for k, v in sorted(report.mean_scores.items(), key=lambda kv: kv[0].value)},
        "mean_fused": report.mean_fused,
        "similarity_percent": report.similarity_percent,
        "failures": report.failures,
    }


def dump_records(records) -> str:
    return "".join(
        json.dumps(record_to_dict(r), sort_keys=True, ensure_ascii=True) + "\n" for r in records
    )
