"""Task-aware evolutionary prompt optimization.

Classifies a task from a dataset example, selects and weights evaluation
metrics for it, and evolves candidate prompts by LLM-guided mutation and
tournament selection to maximize the fused multi-metric score.
"""

from .backends import (
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    HttpPerplexityProvider,
    ProviderContractError,
    RepetitionPerplexityProvider,
    embed,
    perplexity,
)
from .evolution import (
    EvolutionConfig,
    EvolutionError,
    GenerationLog,
    StrategyLibrary,
    default_strategy_library,
    evolve,
    initialize_population,
    mutate_prompt,
    tournament_select,
)
from .gateway import (
    CompletionRequest,
    CompletionResult,
    GatewayError,
    HttpChatProvider,
    MockProvider,
    MockRule,
    MockScript,
    complete,
    with_cache,
)
from .harness import (
    DatasetError,
    DatasetItem,
    EvalRecord,
    EvalReport,
    EvalRunError,
    GENERIC_PROMPT,
    load_dataset,
    run_ablation,
    run_eval,
)
from .metrics import (
    ComplexityConfig,
    EvaluationContext,
    MetricError,
    MetricKind,
    MetricPlan,
    MetricProviders,
    Prompt,
    ScoredPrompt,
    complexity_score,
    diversity_score,
    fluency_score,
    fuse_scores,
    normalize_weights,
    score_prompt,
    similarity_score,
)
from .selection import (
    TaskProfile,
    TaskType,
    classify_task,
    classify_task_rules,
    select_metrics,
)

__version__ = "0.1.0"
