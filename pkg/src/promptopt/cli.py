"""Command-line interface: optimize, evaluate, classify, report.

Exit codes: 0 success, 1 pipeline error, 2 config error. Artifacts are staged
in memory and written via temp-file-plus-rename only after the pipeline
succeeds, so a failed run never leaves partial output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assets import resolve_path
from .config import (
    ConfigError,
    RunConfig,
    build_completion_provider,
    build_fallback_table,
    build_metric_providers,
    build_strategy_library,
    config_to_dict,
    load_config,
    load_templates,
)
from .evolution import dump_generation_logs
from .harness import (
    EvalReport,
    dump_records,
    load_dataset,
    report_to_dict,
    run_ablation,
    run_eval,
)
from .metrics import MetricPlan, Prompt
from .selection import classify_task, select_metrics

EXIT_OK = 0
EXIT_PIPELINE_ERROR = 1
EXIT_CONFIG_ERROR = 2


def write_atomic(path: Path, content: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partials."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    tmp.replace(path)


def plan_to_json(plan: MetricPlan) -> str:
    payload = {"entries": [{"kind": k.value, "weight": w} for k, w in plan.entries]}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _dataset_name(config: RunConfig) -> str:
    return config.dataset_name or resolve_path(config.dataset).stem


def _print_report(report: EvalReport) -> None:
    print(f"items evaluated: {report.item_count} (failures: {report.failures})")
    for kind, value in sorted(report.mean_scores.items(), key=lambda kv: kv[0].value):
        print(f"mean {kind.value}: {value:.4f}")
    print(f"mean fused score: {report.mean_fused:.4f}")
    if report.similarity_percent is not None:
        print(f"mean similarity: {report.similarity_percent:.2f}%")


def cmd_optimize(config: RunConfig) -> int:
    items = load_dataset(resolve_path(config.dataset), limit=config.limit)
    llm = build_completion_provider(config)
    providers = build_metric_providers(config)
    library = build_strategy_library(config)
    templates = load_templates(config)

    result = run_ablation(
        config.mode,
        items,
        llm,
        providers,
        config.evolution,
        library=library,
        dataset_name=_dataset_name(config),
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
        max_tokens=config.provider.max_tokens,
        dev_fraction=config.dev_fraction,
        selection_samples=config.selection_samples,
        classification_template=templates["classification"],
        selection_template=templates["selection"],
        init_template=templates["initialization"],
        mutation_template=templates["mutation"],
        fallback_table=build_fallback_table(config),
    )

    out = Path(config.output_dir)
    write_atomic(out / "config.json", json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")
    write_atomic(out / "best_prompt.txt", result.best_prompt.text + "\n")
    write_atomic(out / "plan.json", plan_to_json(result.plan))
    write_atomic(out / "generations.jsonl", dump_generation_logs(list(result.logs)))
    write_atomic(out / "eval_report.json", json.dumps(report_to_dict(result.report), indent=2, sort_keys=True) + "\n")
    write_atomic(out / "records.jsonl", dump_records(result.records))

    print(f"mode: {result.mode}")
    print(f"task type: {result.profile.task_type.value} (source: {result.profile.source})")
    print(f"best prompt: {result.best_prompt.text}")
    _print_report(result.report)
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_evaluate(config: RunConfig, prompt_file: str) -> int:
    prompt_path = Path(prompt_file)
    if not prompt_path.exists():
        raise ConfigError(f"prompt file not found: {prompt_file}")
    prompt_text = prompt_path.read_text(encoding="utf-8").strip()
    if not prompt_text:
        raise ConfigError(f"prompt file {prompt_file} is empty")

    items = load_dataset(resolve_path(config.dataset), limit=config.limit)
    llm = build_completion_provider(config)
    providers = build_metric_providers(config)
    templates = load_templates(config)

    sample = (items[0].question, items[0].reference)
    profile = classify_task(
        sample, llm,
        template=templates["classification"],
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
    )
    plan = select_metrics(
        profile, llm,
        template=templates["selection"],
        fallback_table=build_fallback_table(config),
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
    )
    prompt = Prompt(text=prompt_text, id="user-prompt", generation=0)
    report, records = run_eval(
        prompt, items, plan, llm, providers,
        dataset_name=_dataset_name(config),
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
        max_tokens=config.provider.max_tokens,
    )

    out = Path(config.output_dir)
    write_atomic(out / "config.json", json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")
    write_atomic(out / "plan.json", plan_to_json(plan))
    write_atomic(out / "eval_report.json", json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    write_atomic(out / "records.jsonl", dump_records(records))

    print(f"task type: {profile.task_type.value} (source: {profile.source})")
    print(f"prompt: {prompt_text}")
    _print_report(report)
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_classify(config: RunConfig) -> int:
    items = load_dataset(resolve_path(config.dataset), limit=config.limit)
    llm = build_completion_provider(config)
    templates = load_templates(config)

    sample = (items[0].question, items[0].reference)
    profile = classify_task(
        sample, llm,
        template=templates["classification"],
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
    )
    plan = select_metrics(
        profile, llm,
        template=templates["selection"],
        fallback_table=build_fallback_table(config),
        model_name=config.provider.model_name,
        temperature=config.provider.temperature,
    )
    print(json.dumps(
        {
            "task_type": profile.task_type.value,
            "source": profile.source,
            "question": profile.sample[0],
            "plan": {k.value: w for k, w in plan.entries},
        },
        indent=2,
        sort_keys=True,
    ))
    return EXIT_OK


def cmd_report(logs_path: Path) -> int:
    if not logs_path.exists():
        raise ConfigError(f"generation log not found: {logs_path}")
    lines = [line for line in logs_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        print("no generations logged (no_prompt_optimization runs do not evolve)")
        return EXIT_OK

    print(f"{'gen':>4}  {'best fused':>10}  {'best id':>8}  best prompt")
    for line in lines:
        record = json.loads(line)
        best = record["best"]
        text = best["text"]
        if len(text) > 60:
            text = text[:57] + "..."
        print(f"{record['generation']:>4}  {best['fused']:>10.4f}  {best['id']:>8}  {text}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptopt",
        description="Task-aware evolutionary prompt optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run config JSON (builtin: prefix allowed)")
        p.add_argument("--dataset", help="override the config's dataset path")
        p.add_argument("--mode", choices=["none", "no_prompt_optimization", "single_metric"],
                       help="ablation mode override")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--limit", type=int, help="truncate the dataset to this many items")
        p.add_argument("--out", help="output directory override")

    p_opt = sub.add_parser("optimize", help="classify, select metrics, evolve, evaluate")
    add_config_flags(p_opt)

    p_eval = sub.add_parser("evaluate", help="score a user-supplied prompt file")
    add_config_flags(p_eval)
    p_eval.add_argument("--prompt-file", required=True, help="text file holding the prompt")

    p_cls = sub.add_parser("classify", help="print the task profile and metric plan")
    add_config_flags(p_cls)

    p_rep = sub.add_parser("report", help="render stored generation logs as a table")
    p_rep.add_argument("--out", help="run output directory holding generations.jsonl")
    p_rep.add_argument("--logs", help="explicit path to a generations.jsonl file")

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "dataset": args.dataset,
        "mode": args.mode,
        "seed": args.seed,
        "limit": args.limit,
        "output_dir": args.out,
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if args.logs:
                return cmd_report(Path(args.logs))
            if args.out:
                return cmd_report(Path(args.out) / "generations.jsonl")
            raise ConfigError("report needs --out or --logs")

        config = load_config(args.config, overrides=_overrides(args))
        if args.command == "optimize":
            return cmd_optimize(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.prompt_file)
        if args.command == "classify":
            return cmd_classify(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE_ERROR


if __name__ == "__main__":
    sys.exit(main())
