"""Procedural benchmark task generators.

Each generator produces a TaskInstance whose natural-language context carries
information essential to forecasting well: future covariate levels driving a
causal system, bounds that will clip the future, a one-off demand surge, or a
periodic outage that will not recur. Generators are pure functions of their
parameters and a seed, so instances regenerate bit-identically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .scoring import ConstraintSpec
from .seeding import derive_rng
from .timeseries import (
    TIMESTAMP_FORMAT,
    ContextBlocks,
    Frequency,
    TaskInstance,
    TimeSeriesWindow,
    split_window,
)

__all__ = [
    "GeneratorKind",
    "BaseSeriesConfig",
    "SvarParams",
    "BoundedParams",
    "SpikeParams",
    "OutageParams",
    "TaskDescriptor",
    "InstancePlan",
    "generate_instance",
    "svar_generate",
    "bounded_generate",
    "spike_generate",
    "outage_generate",
    "task_weights",
    "default_registry",
    "registry_index",
    "instance_filename",
]


class GeneratorKind(enum.Enum):
    """Which procedural recipe builds a task's instances."""

    SVAR = "svar"
    BOUNDED = "bounded"
    SPIKE = "spike"
    OUTAGE = "outage"


# Context-type tags each generator's instances carry.
_KIND_CONTEXT_TYPES: dict[GeneratorKind, frozenset[str]] = {
    GeneratorKind.SVAR: frozenset({"covariate", "causal", "future"}),
    GeneratorKind.BOUNDED: frozenset({"future"}),
    GeneratorKind.SPIKE: frozenset({"future", "covariate"}),
    GeneratorKind.OUTAGE: frozenset({"intemporal", "covariate"}),
}

# Wording for step counts in rendered context, per sampling frequency.
_STEP_UNIT: dict[Frequency, tuple[int, str]] = {
    Frequency.MINUTES10: (10, "minute"),
    Frequency.HOURLY: (1, "hour"),
    Frequency.DAILY: (1, "day"),
    Frequency.MONTHLY: (1, "month"),
}


def _unit_count(frequency: Frequency, steps: int) -> tuple[int, str]:
    per_step, unit = _STEP_UNIT[frequency]
    n = steps * per_step
    return n, unit if n == 1 else unit + "s"


def _duration_phrase(frequency: Frequency, steps: int) -> str:
    n, unit = _unit_count(frequency, steps)
    return f"{n} {unit}"


@dataclass(frozen=True)
class BaseSeriesConfig:
    """Recipe for a synthetic seasonal base series.

    Values follow level + amplitude * sin(2*pi*i/period) + trend*i plus
    seeded Gaussian noise, optionally clamped below at `floor`. `background`
    is the series description shown to forecasters as intemporal context.
    """

    start: datetime
    frequency: Frequency
    level: float
    amplitude: float
    trend: float = 0.0
    sigma: float = 0.0
    floor: float | None = None
    period: int | None = None
    background: str = ""

    def __post_init__(self) -> None:
        if not np.isfinite(self.level):
            raise ValueError("level must be finite")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be non-negative, got {self.amplitude}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.period is not None and self.period < 2:
            raise ValueError(f"period must be at least 2, got {self.period}")

    def build(self, length: int, rng: np.random.Generator) -> TimeSeriesWindow:
        if length < 1:
            raise ValueError(f"length must be positive, got {length}")
        period = self.period if self.period is not None else self.frequency.default_period
        i = np.arange(length, dtype=float)
        values = (
            self.level
            + self.amplitude * np.sin(2.0 * np.pi * i / period)
            + self.trend * i
            + rng.normal(0.0, self.sigma, size=length)
        )
        if self.floor is not None:
            values = np.maximum(float(self.floor), values)
        return TimeSeriesWindow(start=self.start, frequency=self.frequency, values=values)


def _check_schedule(name: str, segments: Sequence[tuple[int, float]]) -> tuple[tuple[int, float], ...]:
    fixed = []
    for seg in segments:
        length, value = seg
        length = int(length)
        value = float(value)
        if length < 1:
            raise ValueError(f"{name} segment lengths must be positive, got {length}")
        if not np.isfinite(value):
            raise ValueError(f"{name} levels must be finite")
        fixed.append((length, value))
    if not fixed:
        raise ValueError(f"{name} must have at least one segment")
    return tuple(fixed)


@dataclass(frozen=True)
class SvarParams:
    """Linear structural VAR with one exogenous covariate.

    The covariate X_0 follows a piecewise-constant schedule; the forecast
    variable X_1 evolves as
        X_1(t) = sum_l a[l-1]*X_0(t-l) + b[l-1]*X_1(t-l) + Normal(0, noise_scale^2).
    The history/future split of the schedule defines the window lengths.
    """

    lag: int = 3
    a: tuple[float, ...] = (0.527, 1.380, -0.661)
    b: tuple[float, ...] = (-0.895, -0.758, -0.793)
    noise_scale: float = 0.1
    history_levels: tuple[tuple[int, float], ...] = ((64, 8.0), (64, 12.0))
    future_levels: tuple[tuple[int, float], ...] = ((16, 30.0), (16, 60.0))
    child_init: tuple[float, ...] = (0.0, 0.0, 0.0)
    start: datetime = datetime(2025, 1, 1)

    def __post_init__(self) -> None:
        if self.lag < 1:
            raise ValueError(f"lag must be at least 1, got {self.lag}")
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        object.__setattr__(self, "child_init", tuple(float(v) for v in self.child_init))
        if len(self.a) != self.lag or len(self.b) != self.lag:
            raise ValueError(
                f"need {self.lag} coefficients per parent, got {len(self.a)} and {len(self.b)}"
            )
        if len(self.child_init) != self.lag:
            raise ValueError(
                f"child_init must provide {self.lag} starting values, got {len(self.child_init)}"
            )
        if self.noise_scale < 0:
            raise ValueError(f"noise_scale must be non-negative, got {self.noise_scale}")
        object.__setattr__(self, "history_levels", _check_schedule("history_levels", self.history_levels))
        object.__setattr__(self, "future_levels", _check_schedule("future_levels", self.future_levels))
        if self.history_len <= self.lag:
            raise ValueError(
                f"history schedule covers {self.history_len} steps; need more than lag={self.lag}"
            )

    @property
    def history_len(self) -> int:
        return sum(n for n, _ in self.history_levels)

    @property
    def horizon(self) -> int:
        return sum(n for n, _ in self.future_levels)


@dataclass(frozen=True)
class BoundedParams:
    """Clip the future into empirical-quantile bounds verbalized as context."""

    base: BaseSeriesConfig
    quantile_lo: float = 0.1
    quantile_hi: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 <= self.quantile_lo < self.quantile_hi <= 1.0:
            raise ValueError(
                f"need 0 <= quantile_lo < quantile_hi <= 1, got "
                f"({self.quantile_lo}, {self.quantile_hi})"
            )


@dataclass(frozen=True)
class SpikeParams:
    """Multiply the future inside one event window, announced as context."""

    base: BaseSeriesConfig
    event_start_offset: int = 0
    event_len: int = 1
    multiplier: float = 5.0

    def __post_init__(self) -> None:
        if self.event_start_offset < 0:
            raise ValueError(f"event_start_offset must be non-negative, got {self.event_start_offset}")
        if self.event_len < 1:
            raise ValueError(f"event_len must be positive, got {self.event_len}")
        if not self.multiplier > 0:
            raise ValueError(f"multiplier must be positive, got {self.multiplier}")


@dataclass(frozen=True)
class OutageParams:
    """Zero out periodic past maintenance windows; the pattern stops at the
    forecast boundary and context says so. `phase` delays the anchor inside
    the period."""

    base: BaseSeriesConfig
    period: int = 14
    outage_len: int = 7
    history_outage_count: int = 3
    phase: int = 0

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError(f"period must be positive, got {self.period}")
        if not 1 <= self.outage_len <= self.period:
            raise ValueError(
                f"outage_len must be in [1, period={self.period}], got {self.outage_len}"
            )
        if self.history_outage_count < 0:
            raise ValueError(
                f"history_outage_count must be non-negative, got {self.history_outage_count}"
            )
        if not 0 <= self.phase <= self.period - self.outage_len:
            raise ValueError(
                f"phase must be in [0, {self.period - self.outage_len}], got {self.phase}"
            )


GeneratorParams = SvarParams | BoundedParams | SpikeParams | OutageParams

_KIND_PARAMS: dict[GeneratorKind, type] = {
    GeneratorKind.SVAR: SvarParams,
    GeneratorKind.BOUNDED: BoundedParams,
    GeneratorKind.SPIKE: SpikeParams,
    GeneratorKind.OUTAGE: OutageParams,
}


@dataclass(frozen=True)
class TaskDescriptor:
    """One registered task: a generator recipe plus benchmark metadata."""

    task_id: str
    cluster_id: str
    generator_kind: GeneratorKind
    generator_params: GeneratorParams
    default_history_len: int
    default_horizon: int
    context_types: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.cluster_id:
            raise ValueError("cluster_id must be non-empty")
        expected_params = _KIND_PARAMS[self.generator_kind]
        if not isinstance(self.generator_params, expected_params):
            raise ValueError(
                f"{self.generator_kind.value} task needs {expected_params.__name__}, "
                f"got {type(self.generator_params).__name__}"
            )
        if self.default_history_len < 1 or self.default_horizon < 1:
            raise ValueError("window lengths must be positive")
        expected_types = _KIND_CONTEXT_TYPES[self.generator_kind]
        if not self.context_types:
            object.__setattr__(self, "context_types", expected_types)
        elif frozenset(self.context_types) != expected_types:
            raise ValueError(
                f"{self.generator_kind.value} instances carry context types "
                f"{sorted(expected_types)}, descriptor says {sorted(self.context_types)}"
            )
        if isinstance(self.generator_params, SvarParams):
            p = self.generator_params
            if p.history_len != self.default_history_len or p.horizon != self.default_horizon:
                raise ValueError(
                    f"covariate schedule covers {p.history_len}+{p.horizon} steps but the "
                    f"task window is {self.default_history_len}+{self.default_horizon}"
                )
        if isinstance(self.generator_params, SpikeParams):
            p = self.generator_params
            if p.event_start_offset + p.event_len > self.default_horizon:
                raise ValueError("event window extends past the horizon")
        if isinstance(self.generator_params, OutageParams):
            p = self.generator_params
            if p.history_outage_count > 0:
                first = self.default_history_len - p.history_outage_count * p.period + p.phase
                if first < 0:
                    raise ValueError("outage pattern starts before the history begins")

    def to_json_dict(self) -> dict:
        params: dict[str, object] = {}
        for key, value in vars(self.generator_params).items():
            if isinstance(value, BaseSeriesConfig):
                cfg = dict(vars(value))
                cfg["start"] = value.start.strftime(TIMESTAMP_FORMAT)
                cfg["frequency"] = value.frequency.value
                params[key] = cfg
            elif isinstance(value, datetime):
                params[key] = value.strftime(TIMESTAMP_FORMAT)
            elif isinstance(value, tuple):
                params[key] = list(
                    list(v) if isinstance(v, tuple) else v for v in value
                )
            else:
                params[key] = value
        return {
            "task_id": self.task_id,
            "cluster_id": self.cluster_id,
            "generator_kind": self.generator_kind.value,
            "generator_params": params,
            "default_history_len": self.default_history_len,
            "default_horizon": self.default_horizon,
            "context_types": sorted(self.context_types),
        }


@dataclass(frozen=True)
class InstancePlan:
    """Which seeds make up an evaluation and its scale calibration."""

    eval_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    calibration_seeds: tuple[int, ...] = tuple(range(1000, 1025))
    samples_per_forecast: int = 25

    def __post_init__(self) -> None:
        object.__setattr__(self, "eval_seeds", tuple(int(s) for s in self.eval_seeds))
        object.__setattr__(
            self, "calibration_seeds", tuple(int(s) for s in self.calibration_seeds)
        )
        if not self.eval_seeds:
            raise ValueError("eval_seeds must be non-empty")
        if not self.calibration_seeds:
            raise ValueError("calibration_seeds must be non-empty")
        if any(s < 0 for s in self.eval_seeds + self.calibration_seeds):
            raise ValueError("seeds must be non-negative")
        if len(set(self.eval_seeds)) != len(self.eval_seeds):
            raise ValueError("eval_seeds contains duplicates")
        if len(set(self.calibration_seeds)) != len(self.calibration_seeds):
            raise ValueError("calibration_seeds contains duplicates")
        overlap = set(self.eval_seeds) & set(self.calibration_seeds)
        if overlap:
            raise ValueError(f"eval and calibration seeds overlap: {sorted(overlap)}")
        if self.samples_per_forecast < 2:
            raise ValueError(
                f"samples_per_forecast must be at least 2, got {self.samples_per_forecast}"
            )

    def to_json_dict(self) -> dict:
        return {
            "eval_seeds": list(self.eval_seeds),
            "calibration_seeds": list(self.calibration_seeds),
            "samples_per_forecast": self.samples_per_forecast,
        }


def _expand_schedule(segments: Sequence[tuple[int, float]]) -> np.ndarray:
    return np.concatenate([np.full(n, v, dtype=float) for n, v in segments])


def _schedule_clause(
    segments: Sequence[tuple[int, float]], window: TimeSeriesWindow
) -> str:
    """Render segments as 'V from DATE to DATE' fragments over the window."""
    parts = []
    pos = 0
    for length, value in segments:
        first = window.timestamp(pos).strftime("%Y-%m-%d")
        last = window.timestamp(pos + length - 1).strftime("%Y-%m-%d")
        parts.append(f"{value:g} from {first} to {last}")
        pos += length
    return ", ".join(parts)


def svar_generate(
    params: SvarParams,
    seed: int,
    *,
    task_id: str = "svar",
    cluster_id: str = "svar",
) -> TaskInstance:
    """Simulate the SVAR child series and verbalize the system as context.

    The rendered context states the noise scale, the lag, the covariate's
    history and future levels with their date ranges, and each lag's update
    equation with 3-decimal coefficients.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    lag = params.lag
    history_len = params.history_len
    horizon = params.horizon
    n = history_len + horizon

    x0 = np.concatenate(
        [_expand_schedule(params.history_levels), _expand_schedule(params.future_levels)]
    )
    rng = derive_rng(task_id, seed, "svar-noise")
    eps = rng.normal(0.0, params.noise_scale, size=n)
    x1 = np.empty(n, dtype=float)
    x1[:lag] = params.child_init
    for t in range(lag, n):
        acc = 0.0
        for l in range(1, lag + 1):
            acc += params.a[l - 1] * x0[t - l] + params.b[l - 1] * x1[t - l]
        x1[t] = acc + eps[t]

    window = TimeSeriesWindow(start=params.start, frequency=Frequency.DAILY, values=x1)
    history, future = split_window(window, history_len)

    parent_lines = [
        "The causal parents for each variable is given below:",
        "No parents for X_0 at any lag.",
    ]
    for l in range(1, lag + 1):
        parent_lines.append(
            f"Parents for X_1 at lag {l}: ['X_0', 'X_1'] affect the forecast variable as "
            f"{params.a[l - 1]:.3f} * X_0 + {params.b[l - 1]:.3f} * X_1."
        )
    lag_times = "t-1" if lag == 1 else f"t-1, ... t-{lag}"
    background = (
        "Given are variables X_0 and X_1, where X_0 is a covariate and X_1 is the "
        "variable to forecast. Variables are generated from a linear Structural "
        "Vector Autoregressive (SVAR) model with additive gauss noise and a noise "
        f"scale of {params.noise_scale:.3e}, with lag = {lag}.\n\n"
        "The task is to forecast the value of the variable X_1 at time t, given the "
        f"values of the covariate X_0 and the variable X_1 itself at times {lag_times}.\n\n"
        "The causal parents affect the child variables at different lags.\n"
        + "\n".join(parent_lines)
    )
    scenario = (
        f"For the first {history_len} days, the covariate X_0 takes a value of "
        f"{_schedule_clause(params.history_levels, history)}.\n"
        f"For the next {horizon} days, the covariate X_0 takes a value of "
        f"{_schedule_clause(params.future_levels, future)}. "
        "Each day can be treated as a timestep for the forecasting task."
    )

    return TaskInstance(
        task_id=task_id,
        instance_seed=seed,
        history=history,
        future=future,
        context=ContextBlocks(background=background, scenario=scenario),
        roi=frozenset(range(horizon)),
        constraint=ConstraintSpec.none(),
        cluster_id=cluster_id,
        context_types=_KIND_CONTEXT_TYPES[GeneratorKind.SVAR],
        adjustments={},
    )


def bounded_generate(
    base: TimeSeriesWindow,
    quantile_lo: float,
    quantile_hi: float,
    seed: int = 0,
    *,
    horizon: int,
    task_id: str = "bounded",
    cluster_id: str = "bounded",
    background: str = "",
) -> TaskInstance:
    """Clip the future into its own empirical quantiles and state the bounds.

    Quantiles use linear interpolation between order statistics. The
    constraint text carries 2-decimal renderings of the exact thresholds
    stored in the machine-readable constraint.
    """
    if not 0.0 <= quantile_lo < quantile_hi <= 1.0:
        raise ValueError(
            f"need 0 <= quantile_lo < quantile_hi <= 1, got ({quantile_lo}, {quantile_hi})"
        )
    if horizon < 1 or horizon >= len(base):
        raise ValueError(
            f"horizon must leave a non-empty history: got {horizon} of {len(base)} steps"
        )
    history, future = split_window(base, len(base) - horizon)
    lo = float(np.quantile(future.values, quantile_lo))
    hi = float(np.quantile(future.values, quantile_hi))
    clipped = np.clip(future.values, lo, hi)
    constraints_text = (
        f"Suppose that in the forecast, the values are bounded above by {hi:.2f}, "
        f"the values are bounded below by {lo:.2f}."
    )
    return TaskInstance(
        task_id=task_id,
        instance_seed=int(seed),
        history=history,
        future=future.with_values(clipped),
        context=ContextBlocks(background=background, constraints_text=constraints_text),
        roi=frozenset(),
        constraint=ConstraintSpec.interval(lo, hi),
        cluster_id=cluster_id,
        context_types=_KIND_CONTEXT_TYPES[GeneratorKind.BOUNDED],
        adjustments={},
    )


def spike_generate(
    base: TimeSeriesWindow,
    event_start_offset: int,
    event_len: int,
    multiplier: float,
    seed: int = 0,
    *,
    horizon: int,
    task_id: str = "spike",
    cluster_id: str = "spike",
    background: str = "",
) -> TaskInstance:
    """Scale the future inside one announced event window.

    The scenario text states the event's start timestamp, its duration, and
    the multiplier; the region of interest is exactly the modified steps.
    """
    if not multiplier > 0:
        raise ValueError(f"multiplier must be positive, got {multiplier}")
    if event_len < 1:
        raise ValueError(f"event_len must be positive, got {event_len}")
    if event_start_offset < 0 or event_start_offset + event_len > horizon:
        raise ValueError(
            f"event window [{event_start_offset}, {event_start_offset + event_len}) "
            f"falls outside the horizon of {horizon} steps"
        )
    if horizon < 1 or horizon >= len(base):
        raise ValueError(
            f"horizon must leave a non-empty history: got {horizon} of {len(base)} steps"
        )
    history, future = split_window(base, len(base) - horizon)
    values = future.values.copy()
    sl = slice(event_start_offset, event_start_offset + event_len)
    values[sl] = values[sl] * float(multiplier)
    event_start = future.timestamp(event_start_offset).strftime(TIMESTAMP_FORMAT)
    scenario = (
        f"A heatwave struck the city, which began on {event_start} and lasted for "
        f"approximately {_duration_phrase(base.frequency, event_len)}, saw temperatures "
        "soar to unprecedented levels. According to the city's electricity provider, "
        f"power consumption during the peak of the heatwave reached approximately "
        f"{multiplier:g} times the typical usage for this time of year."
    )
    return TaskInstance(
        task_id=task_id,
        instance_seed=int(seed),
        history=history,
        future=future.with_values(values),
        context=ContextBlocks(background=background, scenario=scenario),
        roi=frozenset(range(event_start_offset, event_start_offset + event_len)),
        constraint=ConstraintSpec.none(),
        cluster_id=cluster_id,
        context_types=_KIND_CONTEXT_TYPES[GeneratorKind.SPIKE],
        adjustments={"kind": "spike", "multiplier": float(multiplier)},
    )


def outage_generate(
    base: TimeSeriesWindow,
    period: int,
    outage_len: int,
    history_outage_count: int,
    seed: int = 0,
    *,
    horizon: int,
    phase: int = 0,
    task_id: str = "outage",
    cluster_id: str = "outage",
    background: str = "",
) -> TaskInstance:
    """Zero out periodic past maintenance windows and promise none ahead.

    Maintenance windows of `outage_len` steps recur every `period` steps; the
    last history window ends `period - outage_len - phase` steps before the
    forecast starts. The future keeps its true values, and the region of
    interest marks where the pattern would have recurred.
    """
    if period < 1:
        raise ValueError(f"period must be positive, got {period}")
    if not 1 <= outage_len <= period:
        raise ValueError(f"outage_len must be in [1, period={period}], got {outage_len}")
    if history_outage_count < 0:
        raise ValueError(
            f"history_outage_count must be non-negative, got {history_outage_count}"
        )
    if not 0 <= phase <= period - outage_len:
        raise ValueError(f"phase must be in [0, {period - outage_len}], got {phase}")
    if horizon < 1 or horizon >= len(base):
        raise ValueError(
            f"horizon must leave a non-empty history: got {horizon} of {len(base)} steps"
        )
    history_len = len(base) - horizon
    first_start = history_len - history_outage_count * period + phase
    if history_outage_count > 0 and first_start < 0:
        raise ValueError(
            f"{history_outage_count} outages of period {period} need "
            f"{history_outage_count * period - phase} history steps, have {history_len}"
        )

    history, future = split_window(base, history_len)
    values = history.values.copy()
    for k in range(history_outage_count):
        start = first_start + k * period
        values[start : start + outage_len] = 0.0
    history = history.with_values(values)

    # A future step i is a would-be outage step when the schedule anchored at
    # first_start covers absolute position history_len + i.
    offset = (history_len - first_start) % period
    roi = frozenset(i for i in range(horizon) if (i + offset) % period < outage_len)

    n_out, unit_out = _unit_count(base.frequency, outage_len)
    n_per, unit_per = _unit_count(base.frequency, period)
    sentences = []
    if history_outage_count > 0:
        started = base.timestamp(first_start).strftime(TIMESTAMP_FORMAT)
        sentences.append(
            f"The ATM was under maintenance for {n_out} {unit_out}, periodically every "
            f"{n_per} {unit_per}, starting from {started}."
        )
    sentences.append("Assume that the ATM will not be in maintenance in the future.")
    return TaskInstance(
        task_id=task_id,
        instance_seed=int(seed),
        history=history,
        future=future,
        context=ContextBlocks(background=background, scenario=" ".join(sentences)),
        roi=roi,
        constraint=ConstraintSpec.none(),
        cluster_id=cluster_id,
        context_types=_KIND_CONTEXT_TYPES[GeneratorKind.OUTAGE],
        adjustments={"kind": "no_outage_recurrence"},
    )


def generate_instance(descriptor: TaskDescriptor, seed: int) -> TaskInstance:
    """Build the descriptor's instance for one seed, deterministically."""
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    kind = descriptor.generator_kind
    params = descriptor.generator_params
    if kind is GeneratorKind.SVAR:
        return svar_generate(
            params, seed, task_id=descriptor.task_id, cluster_id=descriptor.cluster_id
        )

    length = descriptor.default_history_len + descriptor.default_horizon
    base = params.base.build(length, derive_rng(descriptor.task_id, seed, "base"))
    common = dict(
        horizon=descriptor.default_horizon,
        task_id=descriptor.task_id,
        cluster_id=descriptor.cluster_id,
        background=params.base.background,
    )
    if kind is GeneratorKind.BOUNDED:
        return bounded_generate(base, params.quantile_lo, params.quantile_hi, seed, **common)
    if kind is GeneratorKind.SPIKE:
        return spike_generate(
            base, params.event_start_offset, params.event_len, params.multiplier, seed, **common
        )
    if kind is GeneratorKind.OUTAGE:
        return outage_generate(
            base,
            params.period,
            params.outage_len,
            params.history_outage_count,
            seed,
            phase=params.phase,
            **common,
        )
    raise ValueError(f"unhandled generator kind {kind!r}")


def task_weights(descriptors: Sequence[TaskDescriptor]) -> dict[str, float]:
    """Equal weight per cluster, split equally among the cluster's tasks."""
    if not descriptors:
        raise ValueError("registry is empty")
    cluster_sizes: dict[str, int] = {}
    for d in descriptors:
        cluster_sizes[d.cluster_id] = cluster_sizes.get(d.cluster_id, 0) + 1
    n_clusters = len(cluster_sizes)
    weights = {}
    for d in descriptors:
        if d.task_id in weights:
            raise ValueError(f"duplicate task_id {d.task_id!r}")
        weights[d.task_id] = 1.0 / (n_clusters * cluster_sizes[d.cluster_id])
    return weights


def registry_index(descriptors: Sequence[TaskDescriptor]) -> dict[str, TaskDescriptor]:
    """Map task_id -> descriptor, rejecting duplicates."""
    index: dict[str, TaskDescriptor] = {}
    for d in descriptors:
        if d.task_id in index:
            raise ValueError(f"duplicate task_id {d.task_id!r}")
        index[d.task_id] = d
    return index


def instance_filename(task_id: str, seed: int) -> str:
    return f"{task_id}.{seed}.json"


def default_registry() -> tuple[TaskDescriptor, ...]:
    """The built-in benchmark: five tasks across four clusters."""
    return (
        TaskDescriptor(
            task_id="svar_causal",
            cluster_id="synthetic-svar",
            generator_kind=GeneratorKind.SVAR,
            generator_params=SvarParams(),
            default_history_len=128,
            default_horizon=32,
        ),
        TaskDescriptor(
            task_id="bounded_energy_daily",
            cluster_id="bounded-quantiles",
            generator_kind=GeneratorKind.BOUNDED,
            generator_params=BoundedParams(
                base=BaseSeriesConfig(
                    start=datetime(2025, 3, 1),
                    frequency=Frequency.DAILY,
                    level=40.0,
                    amplitude=12.0,
                    sigma=4.0,
                    floor=0.0,
                    background=(
                        "This is the daily electricity consumption of a commercial "
                        "building, in kilowatt hours."
                    ),
                ),
                quantile_lo=0.10,
                quantile_hi=0.90,
            ),
            default_history_len=120,
            default_horizon=30,
        ),
        TaskDescriptor(
            task_id="bounded_retail_daily",
            cluster_id="bounded-quantiles",
            generator_kind=GeneratorKind.BOUNDED,
            generator_params=BoundedParams(
                base=BaseSeriesConfig(
                    start=datetime(2025, 5, 1),
                    frequency=Frequency.DAILY,
                    level=200.0,
                    amplitude=60.0,
                    trend=0.2,
                    sigma=20.0,
                    floor=0.0,
                    background=(
                        "This is the daily total sales volume of a supermarket, in "
                        "number of transactions."
                    ),
                ),
                quantile_lo=0.25,
                quantile_hi=0.75,
            ),
            default_history_len=112,
            default_horizon=28,
        ),
        TaskDescriptor(
            task_id="spike_hourly_surge",
            cluster_id="event-spike",
            generator_kind=GeneratorKind.SPIKE,
            generator_params=SpikeParams(
                base=BaseSeriesConfig(
                    start=datetime(2025, 6, 10),
                    frequency=Frequency.HOURLY,
                    level=10.0,
                    amplitude=4.0,
                    sigma=0.8,
                    floor=0.0,
                    background=(
                        "This is the electricity consumption recorded in Kilowatt (kW) "
                        "in city A."
                    ),
                ),
                event_start_offset=8,
                event_len=3,
                multiplier=5.0,
            ),
            default_history_len=96,
            default_horizon=24,
        ),
        TaskDescriptor(
            task_id="outage_daily_atm",
            cluster_id="recurring-outage",
            generator_kind=GeneratorKind.OUTAGE,
            generator_params=OutageParams(
                base=BaseSeriesConfig(
                    start=datetime(2025, 2, 1),
                    frequency=Frequency.DAILY,
                    level=120.0,
                    amplitude=35.0,
                    sigma=12.0,
                    floor=0.0,
                    background=(
                        "This is the number of cash withdrawals from an automated "
                        "teller machine (ATM) in an arbitrary location in England."
                    ),
                ),
                period=14,
                outage_len=7,
                history_outage_count=3,
            ),
            default_history_len=84,
            default_horizon=28,
        ),
    )
