"""Evaluation protocol and statistics.

Runs forecasters over the instance plan (per-task scale calibrated from the
held-out calibration futures first), scores every unit with the
region-weighted rule, aggregates with cluster task weights and propagated
standard errors, simulates average ranks from the per-task error bars, and
compares with/without-context runs by a one-sided paired t-test. Results are
persisted as sorted JSON-lines plus a delimited report with figures.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import stdtr
from scipy.stats import rankdata

from .baselines import context_oracle, exp_smoothing_fit, exp_smoothing_sample, seasonal_naive
from .llm import CompletionEndpoint, RetryPolicy, direct_prompt_forecast, llmp_forecast
from .scoring import ForecastEnsemble, ScoreRecord, ScoringConfig, calibrate_alpha, rcrps
from .seeding import derive_rng, derive_seed
from .tasks import InstancePlan, TaskDescriptor, generate_instance, task_weights
from .timeseries import TaskInstance

__all__ = [
    "Forecaster",
    "ExpSmoothingForecaster",
    "SeasonalNaiveForecaster",
    "ContextOracleForecaster",
    "DirectPromptForecaster",
    "LlmpForecaster",
    "EvalRecord",
    "ModelRow",
    "AggregateReport",
    "run_evaluation",
    "aggregate",
    "rank_simulation",
    "paired_t_test",
    "persist_and_report",
]

NO_CONTEXT_SUFFIX = ":no-context"


class Forecaster(Protocol):
    """A forecasting model: instance in, sample-trajectory ensemble out.

    context_enabled tells context-capable models whether to use the
    instance's context; models that cannot use context ignore it.
    """

    model_id: str
    supports_context: bool

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool
    ) -> ForecastEnsemble: ...


class ExpSmoothingForecaster:
    """Additive exponential smoothing fitted per instance; context-blind."""

    supports_context = False

    def __init__(self, num_samples: int = 25, model_id: str = "exp_smoothing"):
        self.num_samples = num_samples
        self.model_id = model_id

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool = False
    ) -> ForecastEnsemble:
        state = exp_smoothing_fit(instance.history)
        return exp_smoothing_sample(state, instance.horizon, self.num_samples, seed)


class SeasonalNaiveForecaster:
    """Repeats the last seasonal cycle of the history; context-blind."""

    supports_context = False

    def __init__(self, num_samples: int = 25, model_id: str = "seasonal_naive"):
        self.num_samples = num_samples
        self.model_id = model_id

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool = False
    ) -> ForecastEnsemble:
        period = instance.history.frequency.default_period
        return seasonal_naive(
            instance.history, period, instance.horizon, self.num_samples, seed
        )


class ContextOracleForecaster:
    """Wraps a context-blind model and, when context is enabled, edits its
    ensemble with the instance's machine-readable effect metadata."""

    supports_context = True

    def __init__(self, base: Forecaster):
        self.base = base
        self.model_id = f"oracle:{base.model_id}"

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool
    ) -> ForecastEnsemble:
        ensemble = self.base.forecast(instance, seed, context_enabled=False)
        if context_enabled:
            return context_oracle(instance, ensemble)
        return ensemble


class DirectPromptForecaster:
    """Single-pass structured prompting against a completion endpoint."""

    supports_context = True

    def __init__(
        self,
        endpoint: CompletionEndpoint,
        policy: RetryPolicy = RetryPolicy(),
        model_id: str = "direct_prompt",
        allow_scientific: bool = False,
    ):
        self.endpoint = endpoint
        self.policy = policy
        self.model_id = model_id
        self.allow_scientific = allow_scientific

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool
    ) -> ForecastEnsemble:
        shown = instance if context_enabled else instance.without_context()
        return direct_prompt_forecast(
            self.endpoint, shown, self.policy, seed, allow_scientific=self.allow_scientific
        )


class LlmpForecaster:
    """Autoregressive numeric-continuation prompting against an endpoint."""

    supports_context = True

    def __init__(
        self,
        endpoint: CompletionEndpoint,
        policy: RetryPolicy = RetryPolicy(),
        model_id: str = "llmp",
        allow_scientific: bool = False,
    ):
        self.endpoint = endpoint
        self.policy = policy
        self.model_id = model_id
        self.allow_scientific = allow_scientific

    def forecast(
        self, instance: TaskInstance, seed: int, context_enabled: bool
    ) -> ForecastEnsemble:
        shown = instance if context_enabled else instance.without_context()
        return llmp_forecast(
            self.endpoint, shown, self.policy, seed, allow_scientific=self.allow_scientific
        )


@dataclass(frozen=True)
class EvalRecord:
    """One (model variant, task, seed, context arm) evaluation outcome.

    model_id is the report label: a stripped-context arm of a context-capable
    model carries the ':no-context' suffix. score is None for a failed
    forecast, with the cause in error. wall_time is informational only and is
    excluded from the persisted record stream.
    """

    model_id: str
    task_id: str
    instance_seed: int
    context_enabled: bool
    score: ScoreRecord | None
    wall_time: float = 0.0
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.score is None

    def sort_key(self) -> tuple:
        return (self.model_id, self.task_id, self.instance_seed, self.context_enabled)

    def to_json_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "task_id": self.task_id,
            "instance_seed": self.instance_seed,
            "context_enabled": self.context_enabled,
            "score": None if self.score is None else self.score.to_json_dict(),
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "EvalRecord":
        raw_score = data.get("score")
        return cls(
            model_id=data["model_id"],
            task_id=data["task_id"],
            instance_seed=int(data["instance_seed"]),
            context_enabled=bool(data["context_enabled"]),
            score=None if raw_score is None else ScoreRecord.from_json_dict(raw_score),
            error=data.get("error", ""),
        )


@dataclass(frozen=True)
class ModelRow:
    """Aggregate line for one model variant."""

    model_id: str
    weighted_mean_rcrps: float
    stderr: float
    significant_failure_count: int
    forecast_failure_count: int
    context_type_means: Mapping[str, float]
    avg_rank_mean: float = math.nan
    avg_rank_std: float = math.nan


@dataclass(frozen=True)
class AggregateReport:
    """Per-model aggregate rows plus the per-(model, task) statistics the
    rank simulation consumes. context_types lists the columns present."""

    rows: tuple[ModelRow, ...]
    task_stats: Mapping[tuple[str, str], tuple[float, float]]
    context_types: tuple[str, ...]

    def row(self, model_id: str) -> ModelRow:
        for row in self.rows:
            if row.model_id == model_id:
                return row
        raise KeyError(f"no aggregate row for model {model_id!r}")

    def with_ranks(self, ranks: Mapping[str, tuple[float, float]]) -> "AggregateReport":
        rows = tuple(
            replace(
                row,
                avg_rank_mean=ranks[row.model_id][0],
                avg_rank_std=ranks[row.model_id][1],
            )
            if row.model_id in ranks
            else row
            for row in self.rows
        )
        return replace(self, rows=rows)


def calibrate_task_alphas(
    descriptors: Sequence[TaskDescriptor], plan: InstancePlan
) -> dict[str, float]:
    """Per-task scale factor: inverse mean future range over the plan's
    held-out calibration seeds."""
    alphas = {}
    for descriptor in descriptors:
        futures = [
            generate_instance(descriptor, seed).future.values
            for seed in plan.calibration_seeds
        ]
        alphas[descriptor.task_id] = calibrate_alpha(futures)
    return alphas


def _variant_label(model: Forecaster, context_enabled: bool) -> str:
    if model.supports_context and not context_enabled:
        return model.model_id + NO_CONTEXT_SUFFIX
    return model.model_id


def _run_unit(
    model: Forecaster,
    descriptor: TaskDescriptor,
    instance_seed: int,
    context_enabled: bool,
    config: ScoringConfig,
    master_seed: int,
) -> EvalRecord:
    label = _variant_label(model, context_enabled)
    instance = generate_instance(descriptor, instance_seed)
    # One forecaster seed per (task, instance, master seed): shared across
    # models and context arms so comparisons are paired.
    unit_seed = derive_seed("unit", descriptor.task_id, instance_seed, master_seed)
    started = time.perf_counter()
    try:
        ensemble = model.forecast(instance, unit_seed, context_enabled=context_enabled)
        score = rcrps(
            ensemble,
            instance.future.values,
            instance.roi,
            instance.constraint,
            config,
            # The sampling-variance estimator needs 4 trajectories; tiny
            # ensembles are still scored, just without an error bar.
            compute_variance=ensemble.num_samples >= 4,
        )
        error = ""
    except Exception as exc:
        score = None
        error = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - started
    return EvalRecord(
        model_id=label,
        task_id=descriptor.task_id,
        instance_seed=instance_seed,
        context_enabled=context_enabled,
        score=score,
        wall_time=elapsed,
        error=error,
    )


def run_evaluation(
    models: Sequence[Forecaster],
    descriptors: Sequence[TaskDescriptor],
    plan: InstancePlan = InstancePlan(),
    *,
    master_seed: int = 0,
    beta: float = 10.0,
    clip_threshold: float = 5.0,
    include_no_context: bool = False,
    jobs: int | None = None,
) -> list[EvalRecord]:
    """Evaluate every model on every (task, eval seed) unit.

    Scales are calibrated per task before any scoring. Context-capable
    models run with context, plus a stripped-context arm when
    include_no_context is set. Units execute concurrently; the returned
    records are sorted deterministically and forecast failures appear as
    records with an error string instead of aborting the run.
    """
    if not models:
        raise ValueError("no models supplied")
    if not descriptors:
        raise ValueError("no task descriptors supplied")
    labels = [
        _variant_label(m, arm) for m in models for arm in _context_arms(m, include_no_context)
    ]
    duplicates = [label for label, n in Counter(labels).items() if n > 1]
    if duplicates:
        raise ValueError(f"duplicate model ids: {sorted(duplicates)}")
    alphas = calibrate_task_alphas(descriptors, plan)
    configs = {
        task_id: ScoringConfig(alpha=alpha, beta=beta, clip_threshold=clip_threshold)
        for task_id, alpha in alphas.items()
    }
    units = [
        (model, descriptor, seed, arm)
        for descriptor in descriptors
        for seed in plan.eval_seeds
        for model in models
        for arm in _context_arms(model, include_no_context)
    ]
    workers = jobs if jobs is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(
            pool.map(
                lambda unit: _run_unit(
                    unit[0], unit[1], unit[2], unit[3], configs[unit[1].task_id], master_seed
                ),
                units,
            )
        )
    return sorted(records, key=EvalRecord.sort_key)


def _context_arms(model: Forecaster, include_no_context: bool) -> tuple[bool, ...]:
    if not model.supports_context:
        return (False,)
    return (True, False) if include_no_context else (True,)


def aggregate(
    records: Iterable[EvalRecord],
    weights: Mapping[str, float],
    task_context_types: Mapping[str, Iterable[str]] | None = None,
) -> AggregateReport:
    """Fold evaluation records into per-model weighted means and error bars.

    Task score is the mean clipped score of the task's scored instances and
    task variance is the mean per-instance sampling variance divided by the
    instance count; model mean and variance combine tasks with the cluster
    weights (renormalized over the tasks the model actually scored, treating
    per-task errors as independent). Failed forecasts are excluded from the
    averages and surface as forecast_failure_count. Context-type columns
    average tasks tagged with each type, reweighted within the tag set.
    """
    records = sorted(records, key=EvalRecord.sort_key)
    tags = {t: frozenset(types) for t, types in (task_context_types or {}).items()}

    by_model_task: dict[tuple[str, str], list[ScoreRecord]] = defaultdict(list)
    forecast_failures: Counter = Counter()
    models_seen = sorted({r.model_id for r in records})
    for record in records:
        if record.failed:
            forecast_failures[record.model_id] += 1
        else:
            by_model_task[(record.model_id, record.task_id)].append(record.score)

    task_stats: dict[tuple[str, str], tuple[float, float]] = {}
    for (model_id, task_id), scores in by_model_task.items():
        if task_id not in weights:
            raise ValueError(f"no task weight for scored task {task_id!r}")
        mean = float(np.mean([s.rcrps_clipped for s in scores]))
        variance = float(np.mean([s.variance for s in scores])) / len(scores)
        task_stats[(model_id, task_id)] = (mean, math.sqrt(variance))

    all_types = sorted({t for types in tags.values() for t in types})
    rows = []
    for model_id in models_seen:
        scored_tasks = sorted(t for (m, t) in task_stats if m == model_id)
        sig_count = sum(
            s.significant_failure
            for (m, _), scores in by_model_task.items()
            if m == model_id
            for s in scores
        )
        if scored_tasks:
            mean, err = _weighted_mean_stderr(model_id, scored_tasks, task_stats, weights)
            ctx_means = {}
            for ctx_type in all_types:
                tagged = [t for t in scored_tasks if ctx_type in tags.get(t, frozenset())]
                if tagged:
                    ctx_means[ctx_type], _ = _weighted_mean_stderr(
                        model_id, tagged, task_stats, weights
                    )
        else:
            mean, err, ctx_means = math.nan, math.nan, {}
        rows.append(
            ModelRow(
                model_id=model_id,
                weighted_mean_rcrps=mean,
                stderr=err,
                significant_failure_count=int(sig_count),
                forecast_failure_count=int(forecast_failures[model_id]),
                context_type_means=ctx_means,
            )
        )
    return AggregateReport(
        rows=tuple(rows), task_stats=task_stats, context_types=tuple(all_types)
    )


def _weighted_mean_stderr(
    model_id: str,
    tasks: Sequence[str],
    task_stats: Mapping[tuple[str, str], tuple[float, float]],
    weights: Mapping[str, float],
) -> tuple[float, float]:
    w = np.array([weights[t] for t in tasks], dtype=float)
    w = w / w.sum()
    means = np.array([task_stats[(model_id, t)][0] for t in tasks])
    stds = np.array([task_stats[(model_id, t)][1] for t in tasks])
    return float(np.dot(w, means)), float(math.sqrt(np.dot(w**2, stds**2)))


def rank_simulation(
    task_stats: Mapping[tuple[str, str], tuple[float, float]],
    weights: Mapping[str, float],
    reps: int = 10_000,
    master_seed: int = 0,
) -> dict[str, tuple[float, float]]:
    """Monte Carlo average ranks from per-(model, task) means and error bars.

    Each repetition redraws every per-task score from an (untruncated)
    Gaussian at its measured mean and standard error, ranks the models per
    task ascending with midpoint ties, and averages ranks with the task
    weights; reported are the mean and spread over repetitions. Only tasks
    scored by every model enter the ranking.
    """
    models = sorted({m for (m, _) in task_stats})
    if len(models) < 2:
        raise ValueError(f"rank simulation needs at least 2 models, got {len(models)}")
    tasks = sorted(
        t
        for t in {t for (_, t) in task_stats}
        if all((m, t) in task_stats for m in models)
    )
    if not tasks:
        raise ValueError("no task is scored by every model")
    w = np.array([weights[t] for t in tasks], dtype=float)
    w = w / w.sum()
    means = np.array([[task_stats[(m, t)][0] for t in tasks] for m in models])
    stds = np.array([[task_stats[(m, t)][1] for t in tasks] for m in models])
    rng = derive_rng("rank-simulation", master_seed)
    draws = means[None, :, :] + stds[None, :, :] * rng.standard_normal(
        (reps, len(models), len(tasks))
    )
    ranks = rankdata(draws, method="average", axis=1)
    weighted = ranks @ w
    return {
        m: (float(weighted[:, i].mean()), float(weighted[:, i].std()))
        for i, m in enumerate(models)
    }


def paired_t_test(
    with_context_scores: Sequence[float],
    without_context_scores: Sequence[float],
) -> float:
    """One-sided paired t-test p-value for "with-context scores are lower".

    Pairs are index-aligned; differences d = with - without feed the t
    statistic and the Student-t CDF. Degenerate zero-variance differences
    give p = 0 or 1 by the sign of the mean, 0.5 when all differences are 0.
    """
    with_scores = np.asarray(with_context_scores, dtype=float)
    without_scores = np.asarray(without_context_scores, dtype=float)
    if with_scores.shape != without_scores.shape or with_scores.ndim != 1:
        raise ValueError("paired score sequences must be 1-D and equal-length")
    n = with_scores.size
    if n < 3:
        raise ValueError(f"paired t-test needs at least 3 pairs, got {n}")
    if not (np.all(np.isfinite(with_scores)) and np.all(np.isfinite(without_scores))):
        raise ValueError("paired scores contain non-finite values")
    diffs = with_scores - without_scores
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean < 0.0:
            return 0.0
        if mean > 0.0:
            return 1.0
        return 0.5
    t_stat = mean / (sd / math.sqrt(n))
    return float(stdtr(n - 1, t_stat))


def _format_cell(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.3f}"


def _report_table(report: AggregateReport) -> tuple[list[str], list[list[str]]]:
    header = ["model", "avg_rcrps", "stderr", "avg_rank", "rank_std", "failures"]
    header += list(report.context_types)
    body = []
    for row in report.rows:
        cells = [
            row.model_id,
            _format_cell(row.weighted_mean_rcrps),
            _format_cell(row.stderr),
            _format_cell(row.avg_rank_mean),
            _format_cell(row.avg_rank_std),
            str(row.significant_failure_count),
        ]
        cells += [
            _format_cell(row.context_type_means.get(t, math.nan))
            for t in report.context_types
        ]
        body.append(cells)
    return header, body


def persist_and_report(
    records: Sequence[EvalRecord],
    report: AggregateReport,
    out_dir: str,
    t_tests: Mapping[str, float] | None = None,
) -> list[str]:
    """Write the run artifacts: sorted JSON-lines records (wall times go to a
    separate timing sidecar so the record stream is bit-stable), the report
    as CSV and as a text table, and bar-chart figures next to the CSV.
    Returns the written paths."""
    from .figures import render_report_figures

    os.makedirs(out_dir, exist_ok=True)
    ordered = sorted(records, key=EvalRecord.sort_key)
    paths = []

    records_path = os.path.join(out_dir, "records.jsonl")
    timings_path = os.path.join(out_dir, "timings.jsonl")
    try:
        with open(records_path, "w", encoding="utf-8") as fh:
            for record in ordered:
                fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
        with open(timings_path, "w", encoding="utf-8") as fh:
            for record in ordered:
                fh.write(
                    json.dumps(
                        {
                            "model_id": record.model_id,
                            "task_id": record.task_id,
                            "instance_seed": record.instance_seed,
                            "context_enabled": record.context_enabled,
                            "wall_time": record.wall_time,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    except OSError as exc:
        raise OSError(f"failed writing records under {out_dir}: {exc}") from exc
    paths += [records_path, timings_path]

    header, body = _report_table(report)
    csv_path = os.path.join(out_dir, "report.csv")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)
    try:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(buffer.getvalue())
    except OSError as exc:
        raise OSError(f"failed writing report to {csv_path}: {exc}") from exc
    paths.append(csv_path)

    txt_path = os.path.join(out_dir, "report.txt")
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(header))),
    ]
    for row in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    total_failures = sum(r.forecast_failure_count for r in report.rows)
    lines.append("")
    lines.append(f"forecast failures (excluded from averages): {total_failures}")
    for row in report.rows:
        if row.forecast_failure_count:
            lines.append(f"  {row.model_id}: {row.forecast_failure_count}")
    if t_tests:
        lines.append("")
        lines.append("context effect, one-sided paired t-test (with < without):")
        for model_id in sorted(t_tests):
            lines.append(f"  {model_id}: p = {t_tests[model_id]:.5f}")
    try:
        with open(txt_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing report to {txt_path}: {exc}") from exc
    paths.append(txt_path)

    paths += render_report_figures(report, out_dir)
    return paths
