"""Evolutionary prompt search: styled initialization, strategy-guided mutation,
tournament selection, elitist survivor truncation.

The loop is deliberately sequential over one seeded random source, so two runs
with the same seed and deterministic providers produce byte-identical logs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .assets import load_asset_text
from .gateway import CompletionProvider, CompletionRequest
from .metrics import (
    EvaluationContext,
    MetricPlan,
    Prompt,
    ScoredPrompt,
    score_prompt,
)
from .selection import TaskProfile, render_template


class EvolutionError(Exception):
    """Evolution aborted; the message carries where it happened."""


@dataclass(frozen=True)
class StrategyLibrary:
    """Pool of thinking styles (initialization) and mutation strategies."""

    thinking_styles: tuple[str, ...]
    mutation_strategies: tuple[str, ...]

    def __post_init__(self) -> None:
        for label, entries in (
            ("thinking_styles", self.thinking_styles),
            ("mutation_strategies", self.mutation_strategies),
        ):
            if not entries:
                raise ValueError(f"{label} must be non-empty")
            if len(set(entries)) != len(entries):
                raise ValueError(f"{label} entries must be unique")


def parse_strategy_library(text: str) -> StrategyLibrary:
    """Parse the sectioned plain-text library format.

    One entry per non-blank line under a ``[thinking_styles]`` or
    ``[mutation_strategies]`` header; ``#`` lines are comments.
    """
    sections: dict[str, list[str]] = {"thinking_styles": [], "mutation_strategies": []}
    current: list[str] | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ValueError(f"line {lineno}: unknown section [{name}]")
            current = sections[name]
            continue
        if current is None:
            raise ValueError(f"line {lineno}: entry before any section header")
        current.append(line)
    return StrategyLibrary(
        thinking_styles=tuple(sections["thinking_styles"]),
        mutation_strategies=tuple(sections["mutation_strategies"]),
    )


def default_strategy_library() -> StrategyLibrary:
    return parse_strategy_library(load_asset_text("default_strategies.txt"))


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 8
    generations: int = 10
    tournament_size: int = 3
    target_score: float | None = None
    seed: int = 0
    elitism: bool = True

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError(
                f"tournament_size must be in [1, population_size], got {self.tournament_size}"
            )
        if self.population_size >= 2 and self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2 for populations of 2 or more")
        if self.target_score is not None and not 0.0 <= self.target_score <= 1.0:
            raise ValueError("target_score must be in [0, 1]")


@dataclass(frozen=True)
class GenerationLog:
    """One generation's full scored population and its best member."""

    generation: int
    population: tuple[ScoredPrompt, ...]
    best: ScoredPrompt

    def __post_init__(self) -> None:
        top = max(sp.fused for sp in self.population)
        if self.best.fused != top:
            raise ValueError(f"log best {self.best.fused} is not the population max {top}")


def default_initialization_template() -> str:
    return load_asset_text("initialization_template.txt")


def default_mutation_template() -> str:
    return load_asset_text("mutation_template.txt")


def describe_task(task: TaskProfile) -> str:
    """Problem description handed to initialization templates."""
    return (
        f"Task type: {task.task_type.value}. Example question: {task.sample[0]}"
    )


def _request(user_text: str, context_like) -> CompletionRequest:
    return CompletionRequest(
        user_text=user_text,
        temperature=context_like.temperature,
        max_tokens=context_like.max_tokens,
        model_name=context_like.model_name,
    )


@dataclass(frozen=True)
class GenerationSettings:
    """Model call settings for initialization and mutation calls."""

    model_name: str = "default"
    temperature: float = 0.1
    max_tokens: int = 512


def initialize_population(
    task_description: str,
    library: StrategyLibrary,
    llm: CompletionProvider,
    config: EvolutionConfig,
    rng: random.Random,
    template: str | None = None,
    settings: GenerationSettings = GenerationSettings(),
) -> list[Prompt]:
    """Generate the generation-0 population.

    Each slot samples a thinking style uniformly (one ``rng.randrange`` draw),
    renders the initialization template, and wraps the completion as a
    prompt. A text duplicating an earlier slot is retried once with a fresh
    style draw, then accepted as-is.
    """
    template = template or default_initialization_template()
    prompts: list[Prompt] = []
    seen: set[str] = set()
    for slot in range(config.population_size):
        text = ""
        for attempt in range(2):
            style = library.thinking_styles[rng.randrange(len(library.thinking_styles))]
            user_text = render_template(template, {"style": style, "task": task_description})
            try:
                text = llm.complete(_request(user_text, settings)).text.strip()
            except Exception as exc:
                raise EvolutionError(f"initialization slot {slot}: provider failed: {exc}") from exc
            if not text:
                raise EvolutionError(f"initialization slot {slot}: empty completion")
            if text not in seen:
                break
        seen.add(text)
        prompts.append(Prompt(text=text, id=f"p{slot:04d}", generation=0))
    return prompts


def mutate_prompt(
    parent: Prompt,
    library: StrategyLibrary,
    llm: CompletionProvider,
    rng: random.Random,
    child_id: str,
    template: str | None = None,
    settings: GenerationSettings = GenerationSettings(),
) -> Prompt:
    """Produce a child by one sampled mutation strategy applied via the LLM."""
    template = template or default_mutation_template()
    strategy = library.mutation_strategies[rng.randrange(len(library.mutation_strategies))]
    user_text = render_template(template, {"strategy": strategy, "parent": parent.text})
    try:
        text = llm.complete(_request(user_text, settings)).text.strip()
    except Exception as exc:
        raise EvolutionError(f"mutation of {parent.id}: provider failed: {exc}") from exc
    if not text:
        raise EvolutionError(f"mutation of {parent.id}: empty completion")
    return Prompt(
        text=text,
        id=child_id,
        generation=parent.generation + 1,
        parent_id=parent.id,
        mutation_note=strategy,
    )


def tournament_select(
    population: list[ScoredPrompt] | tuple[ScoredPrompt, ...],
    k: int,
    rng: random.Random,
) -> ScoredPrompt:
    """Sample k distinct members uniformly and return the highest-fused one.

    Ties break toward the lexicographically smaller prompt id so selection is
    deterministic.
    """
    if not population:
        raise ValueError("cannot select from an empty population")
    if not 1 <= k <= len(population):
        raise ValueError(f"k must be in [1, {len(population)}], got {k}")
    indices = rng.sample(range(len(population)), k)
    winner = population[indices[0]]
    for index in indices[1:]:
        contender = population[index]
        if contender.fused > winner.fused or (
            contender.fused == winner.fused and contender.prompt.id < winner.prompt.id
        ):
            winner = contender
    return winner


def _rank_key(sp: ScoredPrompt) -> tuple[float, str]:
    return (-sp.fused, sp.prompt.id)


def _best_of(population) -> ScoredPrompt:
    return min(population, key=_rank_key)


def evolve(
    task: TaskProfile,
    context: EvaluationContext,
    plan: MetricPlan,
    library: StrategyLibrary,
    llm: CompletionProvider,
    config: EvolutionConfig,
    init_template: str | None = None,
    mutation_template: str | None = None,
) -> tuple[ScoredPrompt, list[GenerationLog]]:
    """Run the whole evolutionary loop and return (overall best, per-generation logs).

    Generation 0 is scored as-is; every later generation selects parents by
    tournament, mutates one child per population slot, scores the children,
    and keeps the top population_size of children plus (with elitism) the
    best prompt seen so far. Stops early when the best fused score reaches
    config.target_score.
    """
    rng = random.Random(config.seed)
    settings = GenerationSettings(
        model_name=context.model_name,
        temperature=context.temperature,
        max_tokens=context.max_tokens,
    )
    prompts = initialize_population(
        describe_task(task), library, llm, config, rng,
        template=init_template, settings=settings,
    )

    def score_all(generation: int, batch: list[Prompt]) -> list[ScoredPrompt]:
        try:
            return [score_prompt(p, plan, context) for p in batch]
        except Exception as exc:
            raise EvolutionError(f"generation {generation}: scoring failed: {exc}") from exc

    population = score_all(0, prompts)
    best_overall = _best_of(population)
    logs = [GenerationLog(0, tuple(population), _best_of(population))]
    next_id = config.population_size

    if config.target_score is not None and best_overall.fused >= config.target_score:
        return best_overall, logs

    for generation in range(1, config.generations + 1):
        children: list[Prompt] = []
        for _ in range(config.population_size):
            parent = tournament_select(population, config.tournament_size, rng).prompt
            try:
                child = mutate_prompt(
                    parent, library, llm, rng, child_id=f"p{next_id:04d}",
                    template=mutation_template, settings=settings,
                )
            except EvolutionError as exc:
                raise EvolutionError(f"generation {generation}: {exc}") from exc
            next_id += 1
            children.append(child)

        scored_children = score_all(generation, children)
        pool = scored_children + ([best_overall] if config.elitism else [])
        pool.sort(key=_rank_key)
        population = pool[: config.population_size]

        generation_best = _best_of(population)
        if _rank_key(generation_best) < _rank_key(best_overall):
            best_overall = generation_best
        logs.append(GenerationLog(generation, tuple(population), generation_best))

        if config.target_score is not None and best_overall.fused >= config.target_score:
            break

    return best_overall, logs


# ---------------------------------------------------------------------------
# Log serialization (line-delimited records for the report command)


def scored_prompt_to_dict(sp: ScoredPrompt) -> dict:
    return {
        "id": sp.prompt.id,
        "text": sp.prompt.text,
        "generation": sp.prompt.generation,
        "parent_id": sp.prompt.parent_id,
        "mutation_note": sp.prompt.mutation_note,
        "scores": {kind.value: value for kind, value in sorted(sp.scores.items(), key=lambda kv: kv[0].value)},
        "fused": sp.fused,
    }


def generation_log_to_dict(log: GenerationLog) -> dict:
    return {
        "generation": log.generation,
        "best": scored_prompt_to_dict(log.best),
        "population": [scored_prompt_to_dict(sp) for sp in log.population],
    }


def dump_generation_logs(logs: list[GenerationLog]) -> str:
    """One JSON object per line, key-sorted for byte-stable artifacts."""
    return "".join(
        json.dumps(generation_log_to_dict(log), sort_keys=True, ensure_ascii=True) + "\n"
        for log in logs
    )
