"""Command-line entry point.

Wires the task registry, model specifications, endpoints, the evaluation
protocol, and report persistence behind four subcommands: list-tasks,
generate, evaluate, and score. Every run writes a manifest (config hash,
seeds, registry hash) sufficient to reproduce it bit-for-bit with
deterministic models.

Exit codes: 0 success, 1 partial failures (failed forecasts or invalid
input files), 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .harness import (
    ContextOracleForecaster,
    DirectPromptForecaster,
    EvalRecord,
    ExpSmoothingForecaster,
    Forecaster,
    LlmpForecaster,
    SeasonalNaiveForecaster,
    aggregate,
    paired_t_test,
    persist_and_report,
    rank_simulation,
    run_evaluation,
)
from .harness import NO_CONTEXT_SUFFIX
from .llm import HttpEndpoint, MockEndpoint, RetryPolicy
from .scoring import ForecastEnsemble, ScoringConfig, calibrate_alpha, rcrps
from .tasks import (
    InstancePlan,
    TaskDescriptor,
    default_registry,
    generate_instance,
    instance_filename,
    task_weights,
)

__all__ = ["main", "ConfigError", "RunConfig", "parse_config", "build_models"]


class ConfigError(Exception):
    """Invalid run configuration; maps to exit code 2."""


_BASELINE_SPECS = ("exp_smoothing", "seasonal_naive")
_CONFIG_KEYS = {
    "tasks",
    "models",
    "plan",
    "scoring",
    "out",
    "master_seed",
    "jobs",
    "no_context",
}
_PLAN_KEYS = {"eval_seeds", "calibration_seeds", "samples_per_forecast"}
_SCORING_KEYS = {"beta", "clip_threshold"}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run settings: config file merged with flag overrides."""

    tasks: tuple[str, ...] = ()
    models: tuple = ("exp_smoothing", "seasonal_naive")
    plan: InstancePlan = InstancePlan()
    beta: float = 10.0
    clip_threshold: float = 5.0
    out: str = "runs/latest"
    master_seed: int = 0
    jobs: int | None = None
    no_context: bool = False

    def to_json_dict(self) -> dict:
        return {
            "tasks": list(self.tasks),
            "models": [m if isinstance(m, str) else dict(m) for m in self.models],
            "plan": self.plan.to_json_dict(),
            "scoring": {"beta": self.beta, "clip_threshold": self.clip_threshold},
            "out": self.out,
            "master_seed": self.master_seed,
            "jobs": self.jobs,
            "no_context": self.no_context,
        }


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional config file with command-line flag overrides."""
    data = _load_config_file(args.config) if args.config else {}

    plan_data = data.get("plan", {})
    if not isinstance(plan_data, dict):
        raise ConfigError("config key 'plan' must be an object")
    unknown = set(plan_data) - _PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    scoring_data = data.get("scoring", {})
    if not isinstance(scoring_data, dict):
        raise ConfigError("config key 'scoring' must be an object")
    unknown = set(scoring_data) - _SCORING_KEYS
    if unknown:
        raise ConfigError(f"unknown scoring keys: {sorted(unknown)}")

    tasks = data.get("tasks", [])
    if getattr(args, "tasks", None):
        tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    models = data.get("models", list(_BASELINE_SPECS))
    if getattr(args, "models", None):
        models = [m.strip() for m in args.models.split(",") if m.strip()]
    if not isinstance(models, list) or not models:
        raise ConfigError("config key 'models' must be a non-empty list")

    master_seed = data.get("master_seed", 0)
    if getattr(args, "seed", None) is not None:
        master_seed = args.seed
    out = data.get("out", "runs/latest")
    if getattr(args, "out", None):
        out = args.out
    jobs = data.get("jobs")
    if getattr(args, "jobs", None) is not None:
        jobs = args.jobs
    no_context = bool(data.get("no_context", False))
    if getattr(args, "no_context", False):
        no_context = True

    try:
        plan = InstancePlan(
            eval_seeds=tuple(plan_data.get("eval_seeds", InstancePlan().eval_seeds)),
            calibration_seeds=tuple(
                plan_data.get("calibration_seeds", InstancePlan().calibration_seeds)
            ),
            samples_per_forecast=int(
                plan_data.get("samples_per_forecast", InstancePlan().samples_per_forecast)
            ),
        )
        config = RunConfig(
            tasks=tuple(str(t) for t in tasks),
            models=tuple(models),
            plan=plan,
            beta=float(scoring_data.get("beta", 10.0)),
            clip_threshold=float(scoring_data.get("clip_threshold", 5.0)),
            out=str(out),
            master_seed=int(master_seed),
            jobs=None if jobs is None else int(jobs),
            no_context=no_context,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}")
    if config.jobs is not None and config.jobs < 1:
        raise ConfigError(f"jobs must be at least 1, got {config.jobs}")
    return config


def select_tasks(config: RunConfig) -> list[TaskDescriptor]:
    registry = default_registry()
    if not config.tasks:
        return registry
    wanted = set(config.tasks)
    matched = [d for d in registry if d.task_id in wanted or d.cluster_id in wanted]
    known = {d.task_id for d in registry} | {d.cluster_id for d in registry}
    unknown = wanted - known
    if unknown:
        raise ConfigError(f"unknown task or cluster names: {sorted(unknown)}")
    return matched


def _build_endpoint(spec: Mapping) -> MockEndpoint | HttpEndpoint:
    kind = spec.get("type")
    if kind == "mock":
        path = spec.get("path")
        if not path:
            raise ConfigError("mock endpoint needs a 'path' to its rules file")
        try:
            return MockEndpoint.from_file(str(path))
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load mock rules from {path}: {exc}")
    if kind == "http":
        required = {"base_url", "model", "api_key_env"}
        missing = required - set(spec)
        if missing:
            raise ConfigError(f"http endpoint config missing keys: {sorted(missing)}")
        try:
            return HttpEndpoint(
                base_url=str(spec["base_url"]),
                model=str(spec["model"]),
                api_key_env=str(spec["api_key_env"]),
                max_concurrent=int(spec.get("max_concurrent", 4)),
                min_interval_s=float(spec.get("min_interval_s", 0.0)),
                timeout_s=float(spec.get("timeout_s", 120.0)),
            )
        except ValueError as exc:
            # Includes a missing credential env var, reported before any run.
            raise ConfigError(str(exc))
    raise ConfigError(f"endpoint type must be 'mock' or 'http', got {kind!r}")


def _build_baseline(spec: str, samples: int) -> Forecaster:
    if spec == "exp_smoothing":
        return ExpSmoothingForecaster(num_samples=samples)
    if spec == "seasonal_naive":
        return SeasonalNaiveForecaster(num_samples=samples)
    raise ConfigError(
        f"unknown baseline {spec!r}; expected one of {list(_BASELINE_SPECS)}"
    )


def _build_model_from_string(spec: str, samples: int) -> Forecaster:
    if spec in _BASELINE_SPECS:
        return _build_baseline(spec, samples)
    if spec.startswith("oracle:"):
        return ContextOracleForecaster(_build_baseline(spec[len("oracle:"):], samples))
    for prefix, cls in (("direct_prompt:mock:", DirectPromptForecaster),
                        ("llmp:mock:", LlmpForecaster)):
        if spec.startswith(prefix):
            endpoint = _build_endpoint({"type": "mock", "path": spec[len(prefix):]})
            return cls(endpoint, RetryPolicy(samples_required=samples))
    raise ConfigError(
        f"unknown model spec {spec!r}; expected a baseline name, 'oracle:<baseline>', "
        f"'direct_prompt:mock:<path>', 'llmp:mock:<path>', or an object with an "
        f"endpoint config"
    )


def _build_model_from_mapping(spec: Mapping, samples: int) -> Forecaster:
    kind = spec.get("kind")
    if kind not in ("direct_prompt", "llmp"):
        raise ConfigError(f"model object 'kind' must be 'direct_prompt' or 'llmp', got {kind!r}")
    endpoint_spec = spec.get("endpoint")
    if not isinstance(endpoint_spec, Mapping):
        raise ConfigError(f"model object for {kind} needs an 'endpoint' object")
    endpoint = _build_endpoint(endpoint_spec)
    policy_spec = spec.get("policy", {})
    if not isinstance(policy_spec, Mapping):
        raise ConfigError("model 'policy' must be an object")
    try:
        policy = RetryPolicy(
            max_attempts_per_sample=int(policy_spec.get("max_attempts_per_sample", 10)),
            samples_required=int(policy_spec.get("samples_required", samples)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid retry policy: {exc}")
    cls = DirectPromptForecaster if kind == "direct_prompt" else LlmpForecaster
    return cls(
        endpoint,
        policy,
        model_id=str(spec.get("model_id", kind)),
        allow_scientific=bool(spec.get("allow_scientific", False)),
    )


def build_models(config: RunConfig) -> list[Forecaster]:
    """Instantiate forecasters from the config's model specs. HTTP
    credentials are validated here, before any instance is generated."""
    samples = config.plan.samples_per_forecast
    models: list[Forecaster] = []
    for spec in config.models:
        if isinstance(spec, str):
            models.append(_build_model_from_string(spec, samples))
        elif isinstance(spec, Mapping):
            models.append(_build_model_from_mapping(spec, samples))
        else:
            raise ConfigError(f"model spec must be a string or object, got {type(spec).__name__}")
    return models


def _registry_hash(descriptors: Sequence[TaskDescriptor]) -> str:
    payload = json.dumps(
        [d.to_json_dict() for d in sorted(descriptors, key=lambda d: d.task_id)],
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _write_manifest(config: RunConfig, descriptors: Sequence[TaskDescriptor], command: str) -> str:
    config_dict = config.to_json_dict()
    manifest = {
        "command": command,
        "config": config_dict,
        "config_hash": hashlib.sha256(
            json.dumps(config_dict, sort_keys=True).encode("utf-8")
        ).hexdigest(),
        "registry_hash": _registry_hash(descriptors),
        "task_ids": [d.task_id for d in descriptors],
        "eval_seeds": list(config.plan.eval_seeds),
        "calibration_seeds": list(config.plan.calibration_seeds),
        "master_seed": config.master_seed,
    }
    os.makedirs(config.out, exist_ok=True)
    path = os.path.join(config.out, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def cmd_list_tasks(config: RunConfig) -> int:
    registry = default_registry()
    if config.tasks:
        wanted = set(config.tasks)
        rows = [d for d in registry if d.task_id in wanted or d.cluster_id in wanted]
    else:
        rows = registry
    if not rows:
        print(f"no tasks match the filter {sorted(config.tasks)}")
        return 0
    header = ("task_id", "cluster", "kind", "history", "horizon", "context_types")
    table = [
        (
            d.task_id,
            d.cluster_id,
            d.generator_kind.value,
            str(d.default_history_len),
            str(d.default_horizon),
            ",".join(sorted(d.context_types)),
        )
        for d in rows
    ]
    widths = [max(len(header[i]), *(len(r[i]) for r in table)) for i in range(len(header))]
    print("  ".join(header[i].ljust(widths[i]) for i in range(len(header))).rstrip())
    for row in table:
        print("  ".join(row[i].ljust(widths[i]) for i in range(len(header))).rstrip())
    return 0


def cmd_generate(config: RunConfig) -> int:
    descriptors = select_tasks(config)
    eval_dir = os.path.join(config.out, "instances")
    calib_dir = os.path.join(config.out, "calibration")
    try:
        os.makedirs(eval_dir, exist_ok=True)
        os.makedirs(calib_dir, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directories under {config.out}: {exc}", file=sys.stderr)
        return 2
    count = 0
    for descriptor in descriptors:
        for seed, directory in [
            *((s, eval_dir) for s in config.plan.eval_seeds),
            *((s, calib_dir) for s in config.plan.calibration_seeds),
        ]:
            instance = generate_instance(descriptor, seed)
            path = os.path.join(directory, instance_filename(descriptor.task_id, seed))
            try:
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(instance.to_json_dict(), fh, sort_keys=True, indent=2)
                    fh.write("\n")
            except OSError as exc:
                print(f"cannot write instance file {path}: {exc}", file=sys.stderr)
                return 2
            count += 1
    _write_manifest(config, descriptors, "generate")
    print(
        f"wrote {count} instance files for {len(descriptors)} tasks "
        f"({len(config.plan.eval_seeds)} eval + {len(config.plan.calibration_seeds)} "
        f"calibration seeds each) under {config.out}"
    )
    return 0


def _context_t_tests(records: Sequence[EvalRecord]) -> dict[str, float]:
    """One-sided paired p-values for every model evaluated with and without
    context, pairing scored (task, seed) units present in both arms."""
    scored: dict[str, dict[tuple[str, int], float]] = {}
    for record in records:
        if record.score is not None:
            scored.setdefault(record.model_id, {})[
                (record.task_id, record.instance_seed)
            ] = record.score.rcrps_clipped
    results = {}
    for model_id, with_scores in scored.items():
        if model_id.endswith(NO_CONTEXT_SUFFIX):
            continue
        without_scores = scored.get(model_id + NO_CONTEXT_SUFFIX)
        if not without_scores:
            continue
        shared = sorted(set(with_scores) & set(without_scores))
        if len(shared) >= 3:
            results[model_id] = paired_t_test(
                [with_scores[k] for k in shared],
                [without_scores[k] for k in shared],
            )
    return results


def cmd_evaluate(config: RunConfig) -> int:
    descriptors = select_tasks(config)
    if not descriptors:
        raise ConfigError("task filter matched no tasks")
    models = build_models(config)
    records = run_evaluation(
        models,
        descriptors,
        config.plan,
        master_seed=config.master_seed,
        beta=config.beta,
        clip_threshold=config.clip_threshold,
        include_no_context=config.no_context,
        jobs=config.jobs,
    )
    weights = task_weights(descriptors)
    tags = {d.task_id: d.context_types for d in descriptors}
    report = aggregate(records, weights, tags)
    if len({m for (m, _) in report.task_stats}) >= 2:
        ranks = rank_simulation(
            report.task_stats, weights, reps=10_000, master_seed=config.master_seed
        )
        report = report.with_ranks(ranks)
    t_tests = _context_t_tests(records)
    paths = persist_and_report(records, report, config.out, t_tests or None)
    _write_manifest(config, descriptors, "evaluate")
    with open(os.path.join(config.out, "report.txt"), encoding="utf-8") as fh:
        print(fh.read(), end="")
    print(f"\nwrote {len(paths) + 1} files under {config.out}")
    failed = sum(1 for r in records if r.failed)
    if failed:
        print(f"{failed} of {len(records)} evaluation units failed", file=sys.stderr)
        return 1
    return 0


def _load_forecast_file(path: str, registry: Mapping[str, TaskDescriptor]) -> tuple:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"unreadable forecast JSON: {exc}")
    if not isinstance(data, dict):
        raise ValueError("forecast file must hold a JSON object")
    missing = {"model_id", "task_id", "seed", "trajectories"} - set(data)
    if missing:
        raise ValueError(f"forecast file missing keys: {sorted(missing)}")
    task_id = str(data["task_id"])
    if task_id not in registry:
        raise ValueError(f"unknown task_id {task_id!r}")
    trajectories = np.asarray(data["trajectories"], dtype=float)
    if trajectories.ndim != 2 or trajectories.shape[0] < 2:
        raise ValueError(
            f"trajectories must be an M x H array with M >= 2 samples, got shape "
            f"{trajectories.shape}"
        )
    instance = generate_instance(registry[task_id], int(data["seed"]))
    if trajectories.shape[1] != instance.horizon:
        raise ValueError(
            f"trajectory horizon {trajectories.shape[1]} does not match task horizon "
            f"{instance.horizon}"
        )
    ensemble = ForecastEnsemble(trajectories)
    return str(data["model_id"]), instance, ensemble, bool(data.get("context_enabled", True))


def cmd_score(config: RunConfig, forecast_files: Sequence[str]) -> int:
    if not forecast_files:
        raise ConfigError("score needs at least one forecast file")
    descriptors = select_tasks(config)
    registry = {d.task_id: d for d in descriptors}
    alphas: dict[str, float] = {}
    records = []
    invalid: list[tuple[str, str]] = []
    for path in forecast_files:
        try:
            model_id, instance, ensemble, context_enabled = _load_forecast_file(
                path, registry
            )
            if instance.task_id not in alphas:
                alphas[instance.task_id] = calibrate_alpha(
                    generate_instance(registry[instance.task_id], s).future.values
                    for s in config.plan.calibration_seeds
                )
            scoring_config = ScoringConfig(
                alpha=alphas[instance.task_id],
                beta=config.beta,
                clip_threshold=config.clip_threshold,
            )
            score = rcrps(
                ensemble,
                instance.future.values,
                instance.roi,
                instance.constraint,
                scoring_config,
                compute_variance=ensemble.num_samples >= 4,
            )
        except (ValueError, TypeError) as exc:
            invalid.append((path, str(exc)))
            continue
        records.append(
            EvalRecord(
                model_id=model_id,
                task_id=instance.task_id,
                instance_seed=instance.instance_seed,
                context_enabled=context_enabled,
                score=score,
            )
        )
    if not records and invalid:
        for path, error in invalid:
            print(f"invalid forecast file {path}: {error}", file=sys.stderr)
        return 1
    weights = task_weights(descriptors)
    tags = {d.task_id: d.context_types for d in descriptors}
    report = aggregate(records, weights, tags)
    if len({m for (m, _) in report.task_stats}) >= 2:
        ranks = rank_simulation(
            report.task_stats, weights, reps=10_000, master_seed=config.master_seed
        )
        report = report.with_ranks(ranks)
    persist_and_report(records, report, config.out)
    with open(os.path.join(config.out, "report.txt"), encoding="utf-8") as fh:
        print(fh.read(), end="")
    if invalid:
        for path, error in invalid:
            print(f"invalid forecast file {path}: {error}", file=sys.stderr)
        return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cafbench",
        description="Context-aided forecast evaluation: benchmark tasks, "
        "forecasters, region-weighted scoring, and weighted reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_models: bool = True) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--tasks", help="comma-separated task or cluster names")
        if with_models:
            p.add_argument("--models", help="comma-separated model specs")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--jobs",
            type=int,
            help="parallel evaluation units (default: logical cores)",
        )

    lt = sub.add_parser("list-tasks", help="print the task registry")
    lt.add_argument("--config", help="JSON config file")
    lt.add_argument("--tasks", help="comma-separated task or cluster names")

    gen = sub.add_parser("generate", help="write instance JSON files")
    add_common(gen, with_models=False)

    ev = sub.add_parser("evaluate", help="run forecasters and write the report")
    add_common(ev)
    ev.add_argument(
        "--no-context",
        action="store_true",
        dest="no_context",
        help="also evaluate context-capable models with context stripped",
    )

    sc = sub.add_parser("score", help="score externally produced forecast files")
    add_common(sc, with_models=False)
    sc.add_argument("forecasts", nargs="+", help="forecast JSON files")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args)
        if args.command == "list-tasks":
            return cmd_list_tasks(config)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "score":
            return cmd_score(config, args.forecasts)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
