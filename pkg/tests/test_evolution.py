"""Evolution engine tests: initialization, mutation, tournaments, the full loop."""

from __future__ import annotations

import itertools
import random
import re

import pytest

from promptopt.backends import HashEmbeddingProvider
from promptopt.evolution import (
    EvolutionConfig,
    EvolutionError,
    GenerationLog,
    StrategyLibrary,
    default_strategy_library,
    dump_generation_logs,
    evolve,
    initialize_population,
    mutate_prompt,
    parse_strategy_library,
    tournament_select,
)
from promptopt.gateway import CompletionResult, MockProvider, MockScript
from promptopt.metrics import (
    EvaluationContext,
    MetricKind,
    MetricPlan,
    MetricProviders,
    Prompt,
    ScoredPrompt,
)
from promptopt.selection import TaskProfile, TaskType

ECHO = MockProvider(MockScript(rules=(), default_response="{user_text}"))


def tiny_library(styles=("style one",), strategies=("strategy one",)) -> StrategyLibrary:
    return StrategyLibrary(thinking_styles=tuple(styles), mutation_strategies=tuple(strategies))


def scored(prompt_id: str, fused: float, generation: int = 0, parent: str | None = None) -> ScoredPrompt:
    prompt = Prompt(text=f"text {prompt_id}", id=prompt_id, generation=generation, parent_id=parent)
    return ScoredPrompt(prompt=prompt, scores={MetricKind.SIMILARITY: fused}, fused=fused)


# ---------------------------------------------------------------------------
# library


def test_library_rejects_empty_or_duplicate():
    with pytest.raises(ValueError):
        StrategyLibrary(thinking_styles=(), mutation_strategies=("m",))
    with pytest.raises(ValueError):
        StrategyLibrary(thinking_styles=("s", "s"), mutation_strategies=("m",))


def test_parse_strategy_library_sections():
    library = parse_strategy_library(
        "# comment\n[thinking_styles]\n s1 \ns2\n\n[mutation_strategies]\nm1\n"
    )
    assert library.thinking_styles == ("s1", "s2")
    assert library.mutation_strategies == ("m1",)


def test_parse_strategy_library_errors():
    with pytest.raises(ValueError, match="unknown section"):
        parse_strategy_library("[nope]\nx\n")
    with pytest.raises(ValueError, match="before any section"):
        parse_strategy_library("dangling entry\n")


def test_default_library_shape():
    library = default_strategy_library()
    assert len(library.thinking_styles) >= 10
    assert len(library.mutation_strategies) >= 10
    assert "breaking the task into steps" in library.mutation_strategies


# ---------------------------------------------------------------------------
# initialize_population


def test_initialize_single_slot_contains_style_and_task():
    prompts = initialize_population(
        "solve additions",
        tiny_library(),
        ECHO,
        EvolutionConfig(population_size=1, tournament_size=1),
        random.Random(0),
    )
    assert len(prompts) == 1
    assert "style one" in prompts[0].text
    assert "solve additions" in prompts[0].text
    assert prompts[0].generation == 0 and prompts[0].parent_id is None


def test_initialize_matches_independent_seeded_sampler():
    styles = tuple(f"style {i}" for i in range(10))
    library = tiny_library(styles=styles)
    config = EvolutionConfig(population_size=4, tournament_size=2, seed=7)
    prompts = initialize_population("the task", library, ECHO, config, random.Random(7))

    # Standalone reimplementation of the documented sampling procedure: one
    # uniform index draw per attempt, one retry on duplicate text, echo LLM.
    rng = random.Random(7)
    seen: set[str] = set()
    expected_styles = []
    for _ in range(4):
        style = styles[rng.randrange(len(styles))]
        if f"style-marker:{style}" in seen:  # placeholder, texts are unique under echo
            style = styles[rng.randrange(len(styles))]
        seen.add(f"style-marker:{style}")
        expected_styles.append(style)

    for prompt, style in zip(prompts, expected_styles):
        assert style in prompt.text


def test_initialize_duplicate_retried_once_then_accepted():
    fixed = MockProvider(MockScript(rules=(), default_response="always the same"))
    draws: list[int] = []

    class TracingRandom(random.Random):
        def randrange(self, *args, **kwargs):
            value = super().randrange(*args, **kwargs)
            draws.append(value)
            return value

    prompts = initialize_population(
        "task",
        tiny_library(styles=("a", "b", "c")),
        fixed,
        EvolutionConfig(population_size=3, tournament_size=2),
        TracingRandom(5),
    )
    assert [p.text for p in prompts] == ["always the same"] * 3
    # slot 0: one draw; slots 1..2: two draws each (duplicate retry)
    assert len(draws) == 5


def test_initialize_empty_styles_rejected():
    with pytest.raises(ValueError):
        tiny_library(styles=())


def test_initialize_provider_failure_names_slot():
    class Failing:
        name = "failing"

        def complete(self, request):
            raise ConnectionError("down")

    with pytest.raises(EvolutionError, match="slot 0"):
        initialize_population(
            "task", tiny_library(), Failing(),
            EvolutionConfig(population_size=1, tournament_size=1), random.Random(0),
        )


# ---------------------------------------------------------------------------
# mutate_prompt


def test_mutate_echo_parent_sets_lineage():
    class EchoParent:
        name = "echo-parent"

        def complete(self, request):
            match = re.search(r"Instruction:\n(.*?)\n\nReply", request.user_text, re.S)
            return CompletionResult(text=match.group(1), provider_name=self.name)

    parent = Prompt(text="solve it carefully", id="p0000", generation=0)
    child = mutate_prompt(parent, tiny_library(), EchoParent(), random.Random(0), child_id="p0001")
    assert child.text == parent.text
    assert child.generation == 1
    assert child.parent_id == "p0000"
    assert child.mutation_note == "strategy one"


def test_mutate_appending_strategy_transform():
    class AppendStrategy:
        name = "append"

        def complete(self, request):
            strategy = re.search(r"below by (.*?)\.\n", request.user_text).group(1)
            parent_text = re.search(r"Instruction:\n(.*?)\n\nReply", request.user_text, re.S).group(1)
            return CompletionResult(text=f"{parent_text} {strategy}", provider_name=self.name)

    parent = Prompt(text="solve it", id="p0000", generation=0)
    child = mutate_prompt(parent, tiny_library(), AppendStrategy(), random.Random(0), child_id="c")
    assert child.text == "solve it strategy one"


def test_mutate_strategy_index_matches_seeded_oracle():
    strategies = tuple(f"strat {i}" for i in range(5))
    library = tiny_library(strategies=strategies)
    parent = Prompt(text="base", id="p0000", generation=0)
    child = mutate_prompt(parent, library, ECHO, random.Random(3), child_id="c")
    expected = strategies[random.Random(3).randrange(5)]
    assert child.mutation_note == expected


def test_mutate_empty_response_errors():
    empty = MockProvider(MockScript(rules=(), default_response="   "))
    parent = Prompt(text="base", id="p0000", generation=0)
    with pytest.raises(EvolutionError, match="empty"):
        mutate_prompt(parent, tiny_library(), empty, random.Random(0), child_id="c")


# ---------------------------------------------------------------------------
# tournament_select


def test_tournament_single_member():
    only = scored("p0", 0.4)
    assert tournament_select([only], 1, random.Random(0)) is only


def test_tournament_full_population_is_argmax():
    population = [scored("p0", 0.9), scored("p1", 0.1), scored("p2", 0.5)]
    for seed in range(20):
        winner = tournament_select(population, 3, random.Random(seed))
        assert winner.prompt.id == "p0"


def test_tournament_matches_brute_force_draw_oracle():
    population = [scored("p0", 0.9), scored("p1", 0.1), scored("p2", 0.5)]
    for seed in range(50):
        winner = tournament_select(population, 2, random.Random(seed))
        indices = random.Random(seed).sample(range(3), 2)
        drawn = [population[i] for i in indices]
        expected = max(drawn, key=lambda sp: (sp.fused, [-ord(c) for c in sp.prompt.id]))
        assert winner is expected


def test_tournament_tie_breaks_by_smaller_id():
    population = [scored("pb", 0.5), scored("pa", 0.5)]
    winner = tournament_select(population, 2, random.Random(0))
    assert winner.prompt.id == "pa"


def test_tournament_rejects_bad_k():
    population = [scored("p0", 0.5)]
    with pytest.raises(ValueError):
        tournament_select(population, 2, random.Random(0))
    with pytest.raises(ValueError):
        tournament_select([], 1, random.Random(0))


def test_tournament_dominance_exhaustive_small():
    base = [scored(f"p{i}", fused) for i, fused in enumerate([0.1, 0.9, 0.4, 0.7])]
    for permutation in itertools.permutations(base):
        winner = tournament_select(list(permutation), 4, random.Random(11))
        assert winner.fused == 0.9


# ---------------------------------------------------------------------------
# evolve


def build_context(answers: dict[str, str]) -> EvaluationContext:
    class Answers:
        name = "answers"

        def complete(self, request):
            for needle, answer in answers.items():
                if needle in request.user_text:
                    return CompletionResult(text=answer, provider_name=self.name)
            return CompletionResult(text="generic words here", provider_name=self.name)

    return EvaluationContext(
        samples=(("the question", "target answer text"),),
        llm=Answers(),
        providers=MetricProviders(embedder=HashEmbeddingProvider()),
    )


SIM_PLAN = MetricPlan(entries=((MetricKind.SIMILARITY, 1.0),))


def arithmetic_profile() -> TaskProfile:
    return TaskProfile(TaskType.ARITHMETIC_REASONING, ("the question", "target answer text"), "rules")


def test_evolve_zero_generations_returns_initial_argmax():
    context = build_context({"the question": "target answer text"})
    config = EvolutionConfig(population_size=2, generations=0, tournament_size=2, seed=1)
    best, logs = evolve(arithmetic_profile(), context, SIM_PLAN, tiny_library(), ECHO, config)
    assert len(logs) == 1
    assert best.fused == max(sp.fused for sp in logs[0].population)


def test_evolve_elitism_keeps_best_non_decreasing():
    context = build_context({"the question": "target answer text"})
    library = tiny_library(
        styles=("s1", "s2", "s3"),
        strategies=tuple(f"strat {i}" for i in range(5)),
    )
    config = EvolutionConfig(population_size=4, generations=10, tournament_size=2, seed=9)
    _, logs = evolve(arithmetic_profile(), context, SIM_PLAN, library, ECHO, config)
    bests = [log.best.fused for log in logs]
    assert all(later >= earlier for earlier, later in zip(bests, bests[1:]))


def test_evolve_early_stop_at_target():
    # every output equals the reference, so generation 0 already hits 1.0
    context = build_context({"": "target answer text"})
    config = EvolutionConfig(
        population_size=2, generations=10, tournament_size=2, seed=3, target_score=1.0
    )
    best, logs = evolve(arithmetic_profile(), context, SIM_PLAN, tiny_library(), ECHO, config)
    assert len(logs) == 1
    assert best.fused == pytest.approx(1.0, abs=1e-9)


def test_evolve_deterministic_logs_byte_identical():
    def run() -> str:
        context = build_context({"the question": "target answer text"})
        config = EvolutionConfig(population_size=3, generations=5, tournament_size=2, seed=42)
        library = tiny_library(styles=("s1", "s2"), strategies=("m1", "m2", "m3"))
        _, logs = evolve(arithmetic_profile(), context, SIM_PLAN, library, ECHO, config)
        return dump_generation_logs(logs)

    assert run() == run()


def test_evolve_population_size_constant_and_lineage_sound():
    context = build_context({"the question": "target answer text"})
    library = tiny_library(styles=("s1", "s2"), strategies=("m1", "m2"))
    config = EvolutionConfig(population_size=4, generations=6, tournament_size=2, seed=5)
    _, logs = evolve(arithmetic_profile(), context, SIM_PLAN, library, ECHO, config)

    known_by_generation: dict[str, int] = {}
    for log in logs:
        assert len(log.population) == 4
        for sp in log.population:
            known_by_generation.setdefault(sp.prompt.id, sp.prompt.generation)

    for log in logs:
        for sp in log.population:
            prompt = sp.prompt
            if prompt.generation == 0:
                assert prompt.parent_id is None
            else:
                assert prompt.parent_id in known_by_generation
                assert known_by_generation[prompt.parent_id] < prompt.generation


def test_evolve_without_elitism_population_is_children_only():
    context = build_context({"the question": "target answer text"})
    library = tiny_library(styles=("s1",), strategies=("m1", "m2"))
    config = EvolutionConfig(
        population_size=3, generations=2, tournament_size=2, seed=8, elitism=False
    )
    _, logs = evolve(arithmetic_profile(), context, SIM_PLAN, library, ECHO, config)
    final_generations = {sp.prompt.generation for sp in logs[-1].population}
    assert final_generations == {2}


def test_generation_log_best_invariant():
    good = scored("p0", 0.9)
    bad = scored("p1", 0.1)
    with pytest.raises(ValueError):
        GenerationLog(generation=0, population=(good, bad), best=bad)


def test_evolution_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(population_size=0)
    with pytest.raises(ValueError):
        EvolutionConfig(population_size=4, tournament_size=5)
    with pytest.raises(ValueError):
        EvolutionConfig(population_size=4, tournament_size=1)
    with pytest.raises(ValueError):
        EvolutionConfig(generations=-1)
