"""Time-series windows, benchmark task instances, and window transforms.

Timestamps are timezone-naive datetimes at seconds resolution. A window's
timestamp at index i is start + i steps, where a step is 10 minutes, an hour,
a day, or a calendar month (with day-of-month clamping, so the 31st maps to
the 28th/29th/30th where needed).
"""

from __future__ import annotations

import calendar
import csv
import enum
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scoring import ConstraintSpec, constraint_violation

__all__ = [
    "Frequency",
    "TimeSeriesWindow",
    "ContextBlocks",
    "TaskInstance",
    "CONTEXT_TYPES",
    "split_window",
    "add_gaussian_noise",
    "shift_dates",
    "affine_transform",
    "load_csv",
]

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"

# Kinds of contextual information a task can carry.
CONTEXT_TYPES = frozenset({"intemporal", "future", "historical", "covariate", "causal"})


def _add_months(ts: datetime, months: int) -> datetime:
    month_index = ts.month - 1 + months
    year = ts.year + month_index // 12
    month = month_index % 12 + 1
    day = min(ts.day, calendar.monthrange(year, month)[1])
    return ts.replace(year=year, month=month, day=day)


class Frequency(enum.Enum):
    """Sampling interval of a series."""

    MINUTES10 = "minutes10"
    HOURLY = "hourly"
    DAILY = "daily"
    MONTHLY = "monthly"

    @property
    def step(self) -> timedelta | None:
        """Fixed step length, or None for calendar months."""
        return {
            Frequency.MINUTES10: timedelta(minutes=10),
            Frequency.HOURLY: timedelta(hours=1),
            Frequency.DAILY: timedelta(days=1),
            Frequency.MONTHLY: None,
        }[self]

    @property
    def default_period(self) -> int:
        """Natural seasonal period: one day for sub-daily data, one week for
        daily data, one year for monthly data."""
        return {
            Frequency.MINUTES10: 144,
            Frequency.HOURLY: 24,
            Frequency.DAILY: 7,
            Frequency.MONTHLY: 12,
        }[self]

    def advance(self, ts: datetime, steps: int) -> datetime:
        if self is Frequency.MONTHLY:
            return _add_months(ts, steps)
        return ts + steps * self.step


def _check_timestamp(ts: datetime) -> datetime:
    if not isinstance(ts, datetime):
        raise TypeError(f"timestamp must be a datetime, got {type(ts).__name__}")
    if ts.tzinfo is not None:
        raise ValueError("timestamps must be timezone-naive")
    if ts.microsecond != 0:
        raise ValueError("timestamps carry seconds resolution; sub-second parts not allowed")
    return ts


@dataclass(frozen=True)
class TimeSeriesWindow:
    """A contiguous run of values sampled at a fixed frequency."""

    start: datetime
    frequency: Frequency
    values: np.ndarray

    def __post_init__(self) -> None:
        _check_timestamp(self.start)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"values must be non-empty 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("window values contain non-finite entries")
        v = np.array(v, copy=True)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    def timestamp(self, index: int) -> datetime:
        if not 0 <= index < len(self):
            raise IndexError(f"index {index} out of range for window of length {len(self)}")
        return self.frequency.advance(self.start, index)

    def timestamps(self) -> list[datetime]:
        return [self.frequency.advance(self.start, i) for i in range(len(self))]

    @property
    def next_start(self) -> datetime:
        """Timestamp one step past the end of the window."""
        return self.frequency.advance(self.start, len(self))

    def with_values(self, values: np.ndarray) -> "TimeSeriesWindow":
        return TimeSeriesWindow(start=self.start, frequency=self.frequency, values=values)

    def to_json_dict(self) -> dict:
        return {
            "start": self.start.strftime(TIMESTAMP_FORMAT),
            "frequency": self.frequency.value,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "TimeSeriesWindow":
        return cls(
            start=datetime.strptime(data["start"], TIMESTAMP_FORMAT),
            frequency=Frequency(data["frequency"]),
            values=np.asarray(data["values"], dtype=np.float64),
        )


@dataclass(frozen=True)
class ContextBlocks:
    """Natural-language context attached to a task instance."""

    background: str = ""
    scenario: str = ""
    constraints_text: str = ""

    @property
    def is_empty(self) -> bool:
        return not (self.background or self.scenario or self.constraints_text)

    def to_json_dict(self) -> dict:
        return {
            "background": self.background,
            "scenario": self.scenario,
            "constraints_text": self.constraints_text,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ContextBlocks":
        return cls(
            background=data.get("background", ""),
            scenario=data.get("scenario", ""),
            constraints_text=data.get("constraints_text", ""),
        )


@dataclass(frozen=True)
class TaskInstance:
    """One benchmark instance: history, future truth, context, and metadata.

    roi holds future step indices making up the region of interest (may be
    empty). constraint is the machine-readable counterpart of any verbalized
    constraint; the future always satisfies it. adjustments carries
    machine-readable post-hoc effect metadata (e.g. a spike multiplier) for
    oracle-style post-processing; it never contains natural language.
    """

    task_id: str
    instance_seed: int
    history: TimeSeriesWindow
    future: TimeSeriesWindow
    context: ContextBlocks
    roi: frozenset[int]
    constraint: ConstraintSpec
    cluster_id: str
    context_types: frozenset[str]
    adjustments: Mapping[str, object]

    def __post_init__(self) -> None:
        object.__setattr__(self, "roi", frozenset(int(i) for i in self.roi))
        object.__setattr__(self, "context_types", frozenset(str(t) for t in self.context_types))
        object.__setattr__(self, "adjustments", MappingProxyType(dict(self.adjustments)))
        if self.history.frequency is not self.future.frequency:
            raise ValueError("history and future frequencies differ")
        if self.future.start != self.history.next_start:
            raise ValueError(
                f"future must start one step after history ends: expected "
                f"{self.history.next_start}, got {self.future.start}"
            )
        horizon = len(self.future)
        for i in self.roi:
            if not 0 <= i < horizon:
                raise ValueError(f"roi index {i} out of range for horizon {horizon}")
        unknown = self.context_types - CONTEXT_TYPES
        if unknown:
            raise ValueError(f"unknown context types: {sorted(unknown)}")
        violation = constraint_violation(self.constraint, self.future.values)
        if violation != 0.0:
            raise ValueError(
                f"ground-truth future violates its own constraint (violation={violation})"
            )

    @property
    def horizon(self) -> int:
        return len(self.future)

    def without_context(self) -> "TaskInstance":
        """Copy of the instance with all natural-language context removed."""
        return replace(self, context=ContextBlocks())

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "instance_seed": self.instance_seed,
            "history": self.history.to_json_dict(),
            "future": self.future.to_json_dict(),
            "context": self.context.to_json_dict(),
            "roi": sorted(self.roi),
            "constraint": self.constraint.to_json_dict(),
            "cluster_id": self.cluster_id,
            "context_types": sorted(self.context_types),
            "adjustments": dict(self.adjustments),
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "TaskInstance":
        return cls(
            task_id=data["task_id"],
            instance_seed=int(data["instance_seed"]),
            history=TimeSeriesWindow.from_json_dict(data["history"]),
            future=TimeSeriesWindow.from_json_dict(data["future"]),
            context=ContextBlocks.from_json_dict(data["context"]),
            roi=frozenset(int(i) for i in data["roi"]),
            constraint=ConstraintSpec.from_json_dict(data["constraint"]),
            cluster_id=data["cluster_id"],
            context_types=frozenset(data["context_types"]),
            adjustments=data.get("adjustments", {}),
        )


def split_window(window: TimeSeriesWindow, history_len: int) -> tuple[TimeSeriesWindow, TimeSeriesWindow]:
    """Split one window into contiguous (history, future) parts."""
    n = len(window)
    if not 1 <= history_len < n:
        raise ValueError(f"history_len must be in [1, {n - 1}], got {history_len}")
    history = TimeSeriesWindow(
        start=window.start, frequency=window.frequency, values=window.values[:history_len]
    )
    future = TimeSeriesWindow(
        start=window.frequency.advance(window.start, history_len),
        frequency=window.frequency,
        values=window.values[history_len:],
    )
    return history, future


def add_gaussian_noise(
    window: TimeSeriesWindow, relative_sigma: float, rng_seed: int
) -> TimeSeriesWindow:
    """Perturb each value with Gaussian noise scaled to the window's spread.

    The noise standard deviation is relative_sigma times the population
    standard deviation of the window's values. A constant window is returned
    unchanged (its spread is zero).
    """
    if relative_sigma < 0:
        raise ValueError(f"relative_sigma must be non-negative, got {relative_sigma}")
    scale = relative_sigma * float(np.std(window.values))
    if scale == 0.0:
        return window
    rng = np.random.default_rng(int(rng_seed))
    noisy = window.values + rng.normal(0.0, scale, size=len(window))
    return window.with_values(noisy)


def shift_dates(window: TimeSeriesWindow, days: int) -> TimeSeriesWindow:
    """Move the window's start by a whole number of days, values untouched."""
    if window.frequency is Frequency.MONTHLY:
        raise ValueError("day shifts are undefined for monthly series")
    return TimeSeriesWindow(
        start=window.start + timedelta(days=int(days)),
        frequency=window.frequency,
        values=window.values,
    )


def affine_transform(window: TimeSeriesWindow, scale: float, offset: float) -> TimeSeriesWindow:
    """Map values through x -> scale * x + offset (scale must be nonzero)."""
    if scale == 0.0:
        raise ValueError("scale must be nonzero")
    return window.with_values(window.values * float(scale) + float(offset))


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    for fmt in (TIMESTAMP_FORMAT, "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unparseable timestamp {raw!r}")


def load_csv(
    path: str,
    frequency: Frequency,
    timestamp_column: str = "timestamp",
    value_column: str = "value",
) -> TimeSeriesWindow:
    """Load a two-column CSV as a window, enforcing even spacing.

    The file needs a header naming the timestamp and value columns.
    Timestamps must advance by exactly one frequency step per row; a gap or
    irregularity is reported with the offending timestamp.
    """
    timestamps: list[datetime] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file (missing header)")
        missing = {timestamp_column, value_column} - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row_number, row in enumerate(reader, start=2):
            try:
                ts = _parse_timestamp(row[timestamp_column])
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_number}: {exc}") from None
            try:
                val = float(row[value_column])
            except (TypeError, ValueError):
                raise ValueError(
                    f"{path}: row {row_number}: unparseable value {row[value_column]!r}"
                ) from None
            timestamps.append(ts)
            values.append(val)
    if not timestamps:
        raise ValueError(f"{path}: no data rows")
    start = timestamps[0]
    for i, ts in enumerate(timestamps):
        expected = frequency.advance(start, i)
        if ts != expected:
            raise ValueError(
                f"{path}: uneven spacing at {ts.strftime(TIMESTAMP_FORMAT)} "
                f"(expected {expected.strftime(TIMESTAMP_FORMAT)})"
            )
    return TimeSeriesWindow(start=start, frequency=frequency, values=np.asarray(values))
