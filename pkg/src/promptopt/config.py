"""Run configuration: one declarative JSON file, flag overrides, env interpolation.

The resolved config is what actually ran: every default filled in, every
``${VAR}`` interpolated (credentials excepted from the snapshot), and the seed
always explicit. ``build_stack`` turns a config into live provider objects.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import backends, gateway
from .assets import resolve_path
from .evolution import EvolutionConfig, StrategyLibrary, default_strategy_library, parse_strategy_library
from .harness import ABLATION_MODES, DEFAULT_DEV_FRACTION
from .metrics import (
    DEFAULT_DIVERSITY_ORDERS,
    ComplexityConfig,
    MetricKind,
    MetricProviders,
)
from .selection import DEFAULT_FALLBACK_PLANS, TaskType


class ConfigError(Exception):
    """The run configuration is invalid or references missing files."""


_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value: Any) -> Any:
    """Replace ``${VAR}`` in strings, recursing through lists and dicts."""
    if isinstance(value, str):
        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references undefined environment variable {name}")
            return os.environ[name]

        return _ENV_RE.sub(substitute, value)
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class ProviderSettings:
    kind: str = "mock"
    mock_script: str | None = None
    endpoint: str | None = None
    model_name: str = "default"
    credential_env: str | None = None
    api_key: str | None = None
    temperature: float = 0.1
    max_tokens: int = 512
    timeout: float = 60.0
    cache_path: str | None = None
    max_concurrent: int | None = None


@dataclass(frozen=True)
class MetricBackendSettings:
    backend: str = "offline"
    base_url: str | None = None
    embedding_dimension: int = backends.OFFLINE_EMBEDDING_DIMENSION
    diversity_orders: tuple[int, ...] = DEFAULT_DIVERSITY_ORDERS
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    output_dir: str = "runs/out"
    seed: int = 0
    mode: str = "none"
    limit: int | None = None
    dataset_name: str | None = None
    dev_fraction: float = DEFAULT_DEV_FRACTION
    selection_samples: int = 1
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    metrics: MetricBackendSettings = field(default_factory=MetricBackendSettings)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    strategy_library: str | None = None
    templates: dict[str, str] = field(default_factory=dict)
    fallback_plans: dict[str, dict[str, float]] | None = None


_TEMPLATE_KEYS = ("classification", "selection", "initialization", "mutation")


def _build_dataclass(cls, data: dict, context: str):
    valid = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - valid
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Load, interpolate, override, default, and validate a run config."""
    config_path = resolve_path(str(path))
    if not config_path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    data = interpolate_env(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    if "dataset" not in data:
        raise ConfigError("config is missing required key 'dataset'")

    provider_data = dict(data.pop("provider", {}))
    metrics_data = dict(data.pop("metrics", {}))
    evolution_data = dict(data.pop("evolution", {}))
    if "seed" in data:
        evolution_data["seed"] = data["seed"]
    else:
        data["seed"] = evolution_data.get("seed", 0)
        evolution_data.setdefault("seed", data["seed"])

    complexity_data = metrics_data.pop("complexity", None)
    if complexity_data is not None:
        if "clause_markers" in complexity_data:
            complexity_data["clause_markers"] = tuple(complexity_data["clause_markers"])
        if "step_markers" in complexity_data:
            complexity_data["step_markers"] = tuple(complexity_data["step_markers"])
        metrics_data["complexity"] = _build_dataclass(
            ComplexityConfig, complexity_data, "metrics.complexity"
        )
    if "diversity_orders" in metrics_data:
        metrics_data["diversity_orders"] = tuple(metrics_data["diversity_orders"])

    provider = _build_dataclass(ProviderSettings, provider_data, "provider")
    metric_settings = _build_dataclass(MetricBackendSettings, metrics_data, "metrics")
    evolution = _build_dataclass(EvolutionConfig, evolution_data, "evolution")

    config = _build_dataclass(
        RunConfig,
        {**data, "provider": provider, "metrics": metric_settings, "evolution": evolution},
        "config",
    )
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    if config.mode not in ABLATION_MODES:
        raise ConfigError(f"mode must be one of {ABLATION_MODES}, got {config.mode!r}")
    if config.limit is not None and config.limit <= 0:
        raise ConfigError(f"limit must be positive, got {config.limit}")
    if config.provider.kind not in ("mock", "http"):
        raise ConfigError(f"provider.kind must be 'mock' or 'http', got {config.provider.kind!r}")
    if config.provider.kind == "mock" and not config.provider.mock_script:
        raise ConfigError("provider.kind 'mock' requires provider.mock_script")
    if config.provider.kind == "http" and not config.provider.endpoint:
        raise ConfigError("provider.kind 'http' requires provider.endpoint")
    if config.metrics.backend not in ("offline", "http"):
        raise ConfigError(
            f"metrics.backend must be 'offline' or 'http', got {config.metrics.backend!r}"
        )
    if config.metrics.backend == "http" and not config.metrics.base_url:
        raise ConfigError("metrics.backend 'http' requires metrics.base_url")
    unknown_templates = set(config.templates) - set(_TEMPLATE_KEYS)
    if unknown_templates:
        raise ConfigError(f"unknown template keys {sorted(unknown_templates)}")

    referenced = [("dataset", config.dataset)]
    if config.provider.mock_script:
        referenced.append(("provider.mock_script", config.provider.mock_script))
    if config.strategy_library:
        referenced.append(("strategy_library", config.strategy_library))
    referenced.extend((f"templates.{k}", v) for k, v in config.templates.items())
    for label, value in referenced:
        if not resolve_path(value).exists():
            raise ConfigError(f"{label} file not found: {value}")


def config_to_dict(config: RunConfig) -> dict:
    """Resolved-config snapshot; the api_key value is never echoed."""
    return {
        "dataset": config.dataset,
        "output_dir": config.output_dir,
        "seed": config.seed,
        "mode": config.mode,
        "limit": config.limit,
        "dataset_name": config.dataset_name,
        "dev_fraction": config.dev_fraction,
        "selection_samples": config.selection_samples,
        "provider": {
            "kind": config.provider.kind,
            "mock_script": config.provider.mock_script,
            "endpoint": config.provider.endpoint,
            "model_name": config.provider.model_name,
            "credential_env": config.provider.credential_env,
            "temperature": config.provider.temperature,
            "max_tokens": config.provider.max_tokens,
            "timeout": config.provider.timeout,
            "cache_path": config.provider.cache_path,
            "max_concurrent": config.provider.max_concurrent,
        },
        "metrics": {
            "backend": config.metrics.backend,
            "base_url": config.metrics.base_url,
            "embedding_dimension": config.metrics.embedding_dimension,
            "diversity_orders": list(config.metrics.diversity_orders),
            "complexity": {
                "max_tokens": config.metrics.complexity.max_tokens,
                "clause_cap": config.metrics.complexity.clause_cap,
                "step_cap": config.metrics.complexity.step_cap,
                "clause_markers": list(config.metrics.complexity.clause_markers),
                "step_markers": list(config.metrics.complexity.step_markers),
            },
        },
        "evolution": {
            "population_size": config.evolution.population_size,
            "generations": config.evolution.generations,
            "tournament_size": config.evolution.tournament_size,
            "target_score": config.evolution.target_score,
            "seed": config.evolution.seed,
            "elitism": config.evolution.elitism,
        },
        "strategy_library": config.strategy_library,
        "templates": dict(config.templates),
        "fallback_plans": config.fallback_plans,
    }


# ---------------------------------------------------------------------------
# Live object construction


def build_completion_provider(config: RunConfig) -> gateway.CompletionProvider:
    settings = config.provider
    if settings.kind == "mock":
        script = gateway.MockScript.from_file(resolve_path(settings.mock_script))
        provider: gateway.CompletionProvider = gateway.MockProvider(script)
    else:
        api_key = settings.api_key
        if api_key is None and settings.credential_env:
            api_key = os.environ.get(settings.credential_env)
            if api_key is None:
                raise ConfigError(
                    f"credential environment variable {settings.credential_env} is not set"
                )
        provider = gateway.HttpChatProvider(
            endpoint=settings.endpoint,
            api_key=api_key,
            timeout=settings.timeout,
            max_concurrent=settings.max_concurrent,
        )
    store = (
        gateway.FileCacheStore(settings.cache_path)
        if settings.cache_path
        else gateway.MemoryCacheStore()
    )
    return gateway.with_cache(provider, store)


def build_metric_providers(config: RunConfig) -> MetricProviders:
    settings = config.metrics
    if settings.backend == "offline":
        embedder: backends.EmbeddingProvider = backends.HashEmbeddingProvider(
            settings.embedding_dimension
        )
        ppl: backends.PerplexityProvider = backends.RepetitionPerplexityProvider()
    else:
        embedder = backends.HttpEmbeddingProvider(settings.base_url)
        ppl = backends.HttpPerplexityProvider(settings.base_url)
    return MetricProviders(
        embedder=embedder,
        ppl=ppl,
        diversity_orders=settings.diversity_orders,
        complexity=settings.complexity,
    )


def build_strategy_library(config: RunConfig) -> StrategyLibrary:
    if config.strategy_library:
        return parse_strategy_library(
            resolve_path(config.strategy_library).read_text(encoding="utf-8")
        )
    return default_strategy_library()


def load_templates(config: RunConfig) -> dict[str, str | None]:
    loaded: dict[str, str | None] = {key: None for key in _TEMPLATE_KEYS}
    for key, value in config.templates.items():
        loaded[key] = resolve_path(value).read_text(encoding="utf-8")
    return loaded


def build_fallback_table(config: RunConfig):
    """Parse a config fallback_plans override into the selection table shape."""
    if not config.fallback_plans:
        return None
    table = dict(DEFAULT_FALLBACK_PLANS)
    for type_name, weights in config.fallback_plans.items():
        task_type = TaskType.from_label(type_name)
        if task_type is TaskType.UNKNOWN and type_name.strip().lower() != "unknown":
            raise ConfigError(f"fallback_plans: unknown task type {type_name!r}")
        try:
            table[task_type] = tuple(
                (MetricKind.from_name(kind), float(weight)) for kind, weight in weights.items()
            )
        except ValueError as exc:
            raise ConfigError(f"fallback_plans[{type_name}]: {exc}") from exc
    return table
