"""Prompt-based LLM forecaster adapters.

Two prompting methods over one abstract text-completion endpoint: a
structured single-pass template (render history and context, ask for tagged
"(timestamp, value)" lines) and an autoregressive numeric continuation that
asks for one value per call. Malformed completions are rejected with typed
reasons and retried up to a policy bound; a deterministic mock endpoint
replays scripted responses for tests and offline runs.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from typing import Protocol, Sequence

import numpy as np

from .scoring import ForecastEnsemble
from .seeding import derive_seed
from .timeseries import TIMESTAMP_FORMAT, TaskInstance

__all__ = [
    "CompletionEndpoint",
    "HttpEndpoint",
    "MockEndpoint",
    "RetryPolicy",
    "ParseRejection",
    "ForecastError",
    "REJECTION_REASONS",
    "direct_prompt_render",
    "direct_prompt_parse",
    "direct_prompt_forecast",
    "llmp_render",
    "llmp_parse_value",
    "llmp_forecast",
]

REJECTION_REASONS = (
    "missing_tags",
    "wrong_count",
    "timestamp_mismatch",
    "bad_number",
    "extra_content",
)

_PLAIN_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")
_SCI_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_PAIR_LINE = re.compile(r"^\(\s*(.+?)\s*,\s*([^\s,()]+)\s*\)$")
_FORECAST_BLOCK = re.compile(r"<forecast>(.*?)</forecast>", re.DOTALL)


class ParseRejection(ValueError):
    """A completion failed validation; `reason` is one of REJECTION_REASONS."""

    def __init__(self, reason: str, detail: str):
        if reason not in REJECTION_REASONS:
            raise ValueError(f"unknown rejection reason {reason!r}")
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


class ForecastError(RuntimeError):
    """All retries were exhausted before enough valid samples were collected.

    Carries the total number of endpoint calls, a histogram of rejection
    reasons, and the reason of the final rejection.
    """

    def __init__(self, method: str, attempts: int, reasons: Counter, last_reason: str):
        histogram = ", ".join(f"{k}={v}" for k, v in sorted(reasons.items())) or "none"
        super().__init__(
            f"{method} forecast failed after {attempts} endpoint calls "
            f"(last rejection: {last_reason}; rejections: {histogram})"
        )
        self.method = method
        self.attempts = attempts
        self.reasons = dict(reasons)
        self.last_reason = last_reason


class CompletionEndpoint(Protocol):
    """Text-completion boundary: one prompt in, one completion string out."""

    def complete(
        self,
        prompt: str,
        *,
        stop: str | None = None,
        max_tokens: int = 256,
        temperature: float = 1.0,
        seed: int | None = None,
    ) -> str: ...


@dataclass(frozen=True)
class RetryPolicy:
    """Sampling budget: how many valid trajectories are required and how many
    endpoint calls each sample may consume before the forecast fails."""

    max_attempts_per_sample: int = 10
    samples_required: int = 25

    def __post_init__(self) -> None:
        if self.max_attempts_per_sample < 1:
            raise ValueError(
                f"max_attempts_per_sample must be at least 1, got {self.max_attempts_per_sample}"
            )
        if self.samples_required < 2:
            raise ValueError(
                f"samples_required must be at least 2, got {self.samples_required}"
            )


class MockEndpoint:
    """Deterministic scripted endpoint.

    Rules are {"prompt_substring_match": str, "response": str | [str, ...]}.
    The first rule whose substring occurs in the prompt is used. A list
    response is consumed one entry per call with that exact prompt, repeating
    the final entry once exhausted. Safe under concurrent use.
    """

    def __init__(self, rules: Sequence[dict]):
        checked = []
        for i, rule in enumerate(rules):
            if "prompt_substring_match" not in rule or "response" not in rule:
                raise ValueError(
                    f"rule {i} must have prompt_substring_match and response keys"
                )
            needle = rule["prompt_substring_match"]
            response = rule["response"]
            if not isinstance(needle, str):
                raise ValueError(f"rule {i}: prompt_substring_match must be a string")
            if isinstance(response, str):
                responses = (response,)
            elif isinstance(response, list) and response and all(
                isinstance(r, str) for r in response
            ):
                responses = tuple(response)
            else:
                raise ValueError(
                    f"rule {i}: response must be a string or non-empty list of strings"
                )
            checked.append((needle, responses))
        self._rules = tuple(checked)
        self._counts: Counter = Counter()
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_file(cls, path: str) -> "MockEndpoint":
        with open(path, encoding="utf-8") as fh:
            rules = json.load(fh)
        if not isinstance(rules, list):
            raise ValueError(f"mock script {path} must hold a JSON array of rules")
        return cls(rules)

    def complete(
        self,
        prompt: str,
        *,
        stop: str | None = None,
        max_tokens: int = 256,
        temperature: float = 1.0,
        seed: int | None = None,
    ) -> str:
        for needle, responses in self._rules:
            if needle in prompt:
                with self._lock:
                    self.calls += 1
                    index = min(self._counts[prompt], len(responses) - 1)
                    self._counts[prompt] += 1
                return responses[index]
        raise LookupError(
            f"no mock rule matches prompt starting {prompt[:80]!r}"
        )


class HttpEndpoint:
    """Chat-completions JSON client with concurrency and pacing limits.

    The credential is read from the environment variable named by
    api_key_env at construction time, so a missing key fails before any
    forecast work starts. Requests carry {model, messages, temperature,
    max_tokens} plus optional {stop, seed}; the completion text is read from
    choices[0].message.content.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str,
        *,
        max_concurrent: int = 4,
        min_interval_s: float = 0.0,
        timeout_s: float = 120.0,
    ):
        if not base_url:
            raise ValueError("base_url must be non-empty")
        if not model:
            raise ValueError("model must be non-empty")
        key = os.environ.get(api_key_env, "")
        if not key:
            raise ValueError(
                f"credential environment variable {api_key_env!r} is not set or empty"
            )
        if max_concurrent < 1:
            raise ValueError(f"max_concurrent must be at least 1, got {max_concurrent}")
        if min_interval_s < 0:
            raise ValueError(f"min_interval_s must be non-negative, got {min_interval_s}")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._key = key
        self._timeout = timeout_s
        self._semaphore = threading.Semaphore(max_concurrent)
        self._interval = min_interval_s
        self._pace_lock = threading.Lock()
        self._next_allowed = 0.0

    def _pace(self) -> None:
        if self._interval <= 0:
            return
        with self._pace_lock:
            now = time.monotonic()
            wait = self._next_allowed - now
            self._next_allowed = max(now, self._next_allowed) + self._interval
        if wait > 0:
            time.sleep(wait)

    def complete(
        self,
        prompt: str,
        *,
        stop: str | None = None,
        max_tokens: int = 256,
        temperature: float = 1.0,
        seed: int | None = None,
    ) -> str:
        import requests

        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        if stop is not None:
            payload["stop"] = [stop]
        if seed is not None:
            payload["seed"] = int(seed)
        with self._semaphore:
            self._pace()
            response = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {self._key}"},
                timeout=self._timeout,
            )
        if response.status_code != 200:
            raise RuntimeError(
                f"endpoint returned HTTP {response.status_code}: {response.text[:200]}"
            )
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RuntimeError(f"endpoint response missing completion text: {exc}")


def _format_value(value: float) -> str:
    return np.format_float_positional(float(value), trim="-")


def _context_lines(instance: TaskInstance) -> str:
    parts = []
    ctx = instance.context
    if ctx.background:
        parts.append(f"Background: {ctx.background}")
    if ctx.scenario:
        parts.append(f"Scenario: {ctx.scenario}")
    if ctx.constraints_text:
        parts.append(f"Constraints: {ctx.constraints_text}")
    return "\n".join(parts)


def direct_prompt_render(instance: TaskInstance) -> str:
    """Render the single-pass structured forecasting prompt.

    History appears as one "(timestamp, value)" line per step inside
    <history> tags, context as labeled lines inside <context> tags, and the
    prediction timestamps as a bracketed list of quoted timestamps.
    """
    history_lines = "\n".join(
        f"({ts.strftime(TIMESTAMP_FORMAT)}, {_format_value(v)})"
        for ts, v in zip(instance.history.timestamps(), instance.history.values)
    )
    pred_time = (
        "[" + " ".join(f"'{ts.strftime(TIMESTAMP_FORMAT)}'" for ts in instance.future.timestamps()) + "]"
    )
    return (
        "I have a time series forecasting task for you.\n"
        "\n"
        "Here is some context about the task. Make sure to factor in any background knowledge,\n"
        "satisfy any constraints, and respect any scenarios.\n"
        "<context>\n"
        f"{_context_lines(instance)}\n"
        "</context>\n"
        "\n"
        "Here is a historical time series in (timestamp, value) format:\n"
        "<history>\n"
        f"{history_lines}\n"
        "</history>\n"
        "\n"
        f"Now please predict the value at the following timestamps: {pred_time}.\n"
        "\n"
        "Return the forecast in (timestamp, value) format in between <forecast> and </forecast> tags.\n"
        "Do not include any other information (e.g., comments) in the forecast.\n"
        "\n"
        "Example:\n"
        "<history>\n"
        "(t1, v1)\n"
        "(t2, v2)\n"
        "(t3, v3)\n"
        "</history>\n"
        "<forecast>\n"
        "(t4, v4)\n"
        "(t5, v5)\n"
        "</forecast>"
    )


def _expected_strings(expected_timestamps: Sequence) -> list[str]:
    out = []
    for ts in expected_timestamps:
        out.append(ts.strftime(TIMESTAMP_FORMAT) if isinstance(ts, datetime) else str(ts))
    return out


def direct_prompt_parse(
    completion: str,
    expected_timestamps: Sequence,
    allow_scientific: bool = False,
) -> np.ndarray:
    """Extract the forecast values from a structured completion.

    Reads the first <forecast>...</forecast> block and requires exactly one
    "(timestamp, value)" line per expected timestamp, in order. Raises
    ParseRejection with a typed reason on any deviation.
    """
    expected = _expected_strings(expected_timestamps)
    block = _FORECAST_BLOCK.search(completion)
    if block is None:
        raise ParseRejection("missing_tags", "no <forecast>...</forecast> block found")
    lines = [line.strip() for line in block.group(1).splitlines() if line.strip()]
    pairs = []
    for line in lines:
        match = _PAIR_LINE.match(line)
        if match is None:
            raise ParseRejection("extra_content", f"unexpected line in forecast block: {line!r}")
        pairs.append((match.group(1), match.group(2)))
    if len(pairs) != len(expected):
        raise ParseRejection(
            "wrong_count", f"expected {len(expected)} forecast lines, got {len(pairs)}"
        )
    decimal = _SCI_DECIMAL if allow_scientific else _PLAIN_DECIMAL
    values = []
    for (ts_text, value_text), expected_ts in zip(pairs, expected):
        if ts_text != expected_ts:
            raise ParseRejection(
                "timestamp_mismatch", f"expected {expected_ts!r}, got {ts_text!r}"
            )
        if decimal.fullmatch(value_text) is None:
            raise ParseRejection("bad_number", f"not a decimal value: {value_text!r}")
        values.append(float(value_text))
    return np.asarray(values, dtype=float)


def direct_prompt_forecast(
    endpoint: CompletionEndpoint,
    instance: TaskInstance,
    policy: RetryPolicy = RetryPolicy(),
    seed: int = 0,
    *,
    allow_scientific: bool = False,
) -> ForecastEnsemble:
    """Collect the required number of valid single-pass forecasts.

    Each sample is drawn at temperature 1.0 with a distinct derived seed per
    (sample, attempt) call and re-requested on rejection, up to the policy's
    per-sample call budget. Exhausting any sample's budget raises
    ForecastError with the rejection-reason histogram.
    """
    prompt = direct_prompt_render(instance)
    expected = instance.future.timestamps()
    max_tokens = 64 + 40 * instance.horizon
    reasons: Counter = Counter()
    calls = 0
    rows = []
    for sample in range(policy.samples_required):
        parsed = None
        last: ParseRejection | None = None
        for attempt in range(policy.max_attempts_per_sample):
            text = endpoint.complete(
                prompt,
                stop=None,
                max_tokens=max_tokens,
                temperature=1.0,
                seed=derive_seed(seed, sample, attempt),
            )
            calls += 1
            try:
                parsed = direct_prompt_parse(text, expected, allow_scientific)
                break
            except ParseRejection as rejection:
                reasons[rejection.reason] += 1
                last = rejection
        if parsed is None:
            assert last is not None
            raise ForecastError("direct_prompt", calls, reasons, last.reason)
        rows.append(parsed)
    return ForecastEnsemble(np.vstack(rows))


def llmp_render(instance: TaskInstance) -> str:
    """Render the autoregressive numeric-continuation prompt.

    Context headers are always present (empty bodies stay empty), the history
    is "timestamp,value" lines, and the prompt ends with the first future
    timestamp and a trailing comma for the model to complete.
    """
    history = "\n".join(
        f"{ts.strftime(TIMESTAMP_FORMAT)},{_format_value(v)}"
        for ts, v in zip(instance.history.timestamps(), instance.history.values)
    )
    first_future = instance.future.timestamp(0).strftime(TIMESTAMP_FORMAT)
    ctx = instance.context
    return (
        "Forecast the future values of this time series, while considering the "
        "following background knowledge, scenario, and constraints.\n"
        "\n"
        f"Background knowledge:\n{ctx.background}\n"
        "\n"
        f"Scenario:\n{ctx.scenario}\n"
        "\n"
        f"Constraints:\n{ctx.constraints_text}\n"
        "\n"
        f"{history}\n"
        f"{first_future},"
    )


def llmp_parse_value(text: str, allow_scientific: bool = False) -> float:
    """Parse one autoregressive continuation token as a decimal value."""
    stripped = text.strip()
    decimal = _SCI_DECIMAL if allow_scientific else _PLAIN_DECIMAL
    if not stripped or decimal.fullmatch(stripped) is None:
        raise ParseRejection("bad_number", f"not a decimal value: {stripped!r}")
    return float(stripped)


def llmp_forecast(
    endpoint: CompletionEndpoint,
    instance: TaskInstance,
    policy: RetryPolicy = RetryPolicy(),
    seed: int = 0,
    *,
    allow_scientific: bool = False,
) -> ForecastEnsemble:
    """Collect sample paths by autoregressive one-value-at-a-time completion.

    Each accepted value is appended to the prompt followed by the next
    timestamp and a comma. A rejected step is re-requested; each sample has a
    budget of max_attempts_per_sample - 1 rejected calls across its whole
    path (so a one-step forecast makes at most max_attempts_per_sample
    calls). Budget exhaustion raises ForecastError.
    """
    base_prompt = llmp_render(instance)
    timestamps = [ts.strftime(TIMESTAMP_FORMAT) for ts in instance.future.timestamps()]
    horizon = instance.horizon
    reasons: Counter = Counter()
    calls = 0
    rows = []
    for sample in range(policy.samples_required):
        prompt = base_prompt
        rejections_left = policy.max_attempts_per_sample - 1
        row = []
        step = 0
        while step < horizon:
            attempt_tag = policy.max_attempts_per_sample - rejections_left
            text = endpoint.complete(
                prompt,
                stop="\n",
                max_tokens=24,
                temperature=1.0,
                seed=derive_seed(seed, sample, step, attempt_tag),
            )
            calls += 1
            try:
                value = llmp_parse_value(text, allow_scientific)
            except ParseRejection as rejection:
                reasons[rejection.reason] += 1
                if rejections_left == 0:
                    raise ForecastError("llmp", calls, reasons, rejection.reason)
                rejections_left -= 1
                continue
            row.append(value)
            if step + 1 < horizon:
                prompt += f"{text.strip()}\n{timestamps[step + 1]},"
            step += 1
        rows.append(row)
    return ForecastEnsemble(np.asarray(rows, dtype=float))
