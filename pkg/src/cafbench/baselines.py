"""Context-blind baseline forecasters and a context-oracle post-processor.

The quantitative baselines never see natural-language context: additive
exponential smoothing (level/trend/seasonal with automatic fallbacks) and a
seasonal-naive repeater, both emitting sample-path ensembles. context_oracle
is the opposite reference point: it edits a context-blind ensemble using an
instance's machine-readable effect metadata only, giving a directional target
that context-aware forecasters should approach.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scoring import ForecastEnsemble
from .timeseries import TaskInstance, TimeSeriesWindow

__all__ = [
    "ExpSmoothingState",
    "exp_smoothing_fit",
    "exp_smoothing_sample",
    "point_forecast",
    "seasonal_naive",
    "context_oracle",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExpSmoothingState:
    """Fitted additive exponential-smoothing model.

    `seasonals` is rotated so seasonals[j % P] applies to forecast step j.
    trend/beta and seasonals/gamma are None together when the component is
    disabled. `residuals` holds one-step in-sample errors for bootstrap
    sampling; residual_std is their root mean square.
    """

    level: float
    trend: float | None
    seasonals: tuple[float, ...] | None
    alpha: float
    beta: float | None
    gamma: float | None
    residual_std: float
    residuals: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not np.isfinite(self.level):
            raise ValueError("level must be finite")
        if (self.trend is None) != (self.beta is None):
            raise ValueError("trend and beta must be set together")
        if (self.seasonals is None) != (self.gamma is None):
            raise ValueError("seasonals and gamma must be set together")
        for name, w in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if w is not None and not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {w}")
        if self.seasonals is not None and len(self.seasonals) < 2:
            raise ValueError("seasonal component needs a period of at least 2")
        if not (np.isfinite(self.residual_std) and self.residual_std >= 0.0):
            raise ValueError(f"residual_std must be finite and non-negative, got {self.residual_std}")

    @property
    def period(self) -> int:
        return len(self.seasonals) if self.seasonals is not None else 1


def _recursion_sse(
    y: np.ndarray,
    weights: np.ndarray,
    l0: float,
    b0: float,
    s0: np.ndarray,
    start: int,
) -> np.ndarray:
    """One-step squared error of the smoothing recursion, batched over
    weight candidates. weights has shape (K, 3) = (alpha, beta, gamma);
    disabled components enter with weight 0 and zero initial state."""
    alpha, beta, gamma = weights[:, 0], weights[:, 1], weights[:, 2]
    k = weights.shape[0]
    period = s0.shape[0]
    l = np.full(k, l0)
    b = np.full(k, b0)
    s = np.tile(s0, (k, 1))
    sse = np.zeros(k)
    for t in range(start, y.shape[0]):
        phase = t % period
        err = y[t] - (l + b + s[:, phase])
        sse += err * err
        l_new = alpha * (y[t] - s[:, phase]) + (1.0 - alpha) * (l + b)
        b = beta * (l_new - l) + (1.0 - beta) * b
        s[:, phase] = gamma * (y[t] - l_new) + (1.0 - gamma) * s[:, phase]
        l = l_new
    return sse


def _golden_refine(objective, lo: float, hi: float, iterations: int = 40) -> float:
    """Fixed-iteration golden-section minimizer (no value-based stopping, so
    runs are bit-reproducible)."""
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = objective(c), objective(d)
    for _ in range(iterations):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = objective(d)
    return (lo + hi) / 2.0


def exp_smoothing_fit(history: TimeSeriesWindow, period_hint: int | None = None) -> ExpSmoothingState:
    """Fit additive Holt-Winters by minimizing in-sample one-step squared
    error over the smoothing weights (0.05 grid, then coordinate
    golden-section refinement).

    The seasonal component is disabled unless the history covers at least two
    full periods (and the period is at least 2); the trend component is
    disabled for histories shorter than 5 steps. The fit is performed on the
    mean-centered series so that results are equivariant to additive shifts.
    """
    values = np.asarray(history.values, dtype=float)
    n = values.shape[0]
    period = int(period_hint) if period_hint is not None else history.frequency.default_period
    if period < 1:
        raise ValueError(f"period must be positive, got {period}")

    use_seasonal = period >= 2 and n >= 2 * period
    use_trend = n >= 5
    offset = float(np.mean(values))
    y = values - offset

    if use_seasonal:
        # Level is anchored at the end of the first period and the first
        # period is detrended before extracting seasonals, so an exactly
        # linear-plus-seasonal series is a fixed point of the recursion.
        mean1 = float(np.mean(y[:period]))
        b0 = (float(np.mean(y[period : 2 * period])) - mean1) / period if use_trend else 0.0
        l0 = mean1 + b0 * (period - 1) / 2.0
        s0 = y[:period] - (mean1 + b0 * (np.arange(period) - (period - 1) / 2.0))
        start = period
        p_eff = period
    else:
        l0 = float(y[0])
        b0 = float(y[1] - y[0]) if use_trend else 0.0
        s0 = np.zeros(1)
        start = 1
        p_eff = 1

    grid = np.round(np.arange(0.0, 1.0 + 1e-9, 0.05), 2)
    axes = [grid, grid if use_trend else np.zeros(1), grid if use_seasonal else np.zeros(1)]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    sse = _recursion_sse(y, mesh, l0, b0, s0, start)
    best = mesh[int(np.argmin(sse))].copy()

    def sse_at(weights):
        return float(_recursion_sse(y, np.asarray([weights]), l0, b0, s0, start)[0])

    active = [0] + ([1] if use_trend else []) + ([2] if use_seasonal else [])
    for _ in range(2):
        for dim in active:
            center = best[dim]

            def objective(w, _dim=dim):
                trial = best.copy()
                trial[_dim] = w
                return sse_at(trial)

            best[dim] = _golden_refine(
                objective, max(0.0, center - 0.05), min(1.0, center + 0.05)
            )
    best = np.round(best, 12)

    # Final pass with the chosen weights to obtain the end-of-history state
    # and the one-step residuals.
    alpha, beta, gamma = (float(w) for w in best)
    l, b = l0, b0
    s = s0.copy()
    residuals = []
    for t in range(start, n):
        phase = t % p_eff
        err = y[t] - (l + b + s[phase])
        residuals.append(err)
        l_new = alpha * (y[t] - s[phase]) + (1.0 - alpha) * (l + b)
        b = beta * (l_new - l) + (1.0 - beta) * b
        s[phase] = gamma * (y[t] - l_new) + (1.0 - gamma) * s[phase]
        l = l_new

    residual_std = float(np.sqrt(np.mean(np.square(residuals)))) if residuals else 0.0
    rotated = tuple(float(s[(n + j) % p_eff]) for j in range(p_eff)) if use_seasonal else None
    return ExpSmoothingState(
        level=l + offset,
        trend=b if use_trend else None,
        seasonals=rotated,
        alpha=alpha,
        beta=beta if use_trend else None,
        gamma=gamma if use_seasonal else None,
        residual_std=residual_std,
        residuals=tuple(float(r) for r in residuals),
    )


def _simulate(state: ExpSmoothingState, horizon: int, innovations: np.ndarray) -> np.ndarray:
    """Propagate innovation paths through the smoothing recursions. The
    noiseless path (all-zero innovations) is the point forecast."""
    m = innovations.shape[0]
    period = state.period
    alpha = state.alpha
    beta = state.beta if state.beta is not None else 0.0
    gamma = state.gamma if state.gamma is not None else 0.0
    l = np.full(m, state.level)
    b = np.full(m, state.trend if state.trend is not None else 0.0)
    s = np.tile(state.seasonals if state.seasonals is not None else (0.0,), (m, 1))
    out = np.empty((m, horizon))
    for j in range(horizon):
        phase = j % period
        season = s[:, phase]
        y = l + b + season + innovations[:, j]
        out[:, j] = y
        l_new = alpha * (y - season) + (1.0 - alpha) * (l + b)
        b = beta * (l_new - l) + (1.0 - beta) * b
        s[:, phase] = gamma * (y - l_new) + (1.0 - gamma) * season
        l = l_new
    return out


def point_forecast(state: ExpSmoothingState, horizon: int) -> np.ndarray:
    """Noiseless forecast path implied by the fitted state."""
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    return _simulate(state, horizon, np.zeros((1, horizon)))[0]


def exp_smoothing_sample(
    state: ExpSmoothingState,
    horizon: int,
    num_samples: int,
    seed: int,
    innovations: str = "gaussian",
) -> ForecastEnsemble:
    """Sample forecast trajectories by feeding random innovations through the
    smoothing recursions.

    innovations="gaussian" draws Normal(0, residual_std) shocks;
    innovations="bootstrap" resamples the fitted one-step residuals.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if num_samples < 2:
        raise ValueError(f"need at least 2 samples, got {num_samples}")
    rng = np.random.default_rng(int(seed))
    if innovations == "gaussian":
        shocks = rng.normal(0.0, state.residual_std, size=(num_samples, horizon))
    elif innovations == "bootstrap":
        pool = np.asarray(state.residuals, dtype=float)
        if pool.size == 0:
            shocks = np.zeros((num_samples, horizon))
        else:
            shocks = rng.choice(pool, size=(num_samples, horizon), replace=True)
    else:
        raise ValueError(f"unknown innovations mode {innovations!r}")
    return ForecastEnsemble(_simulate(state, horizon, shocks))


def seasonal_naive(
    history: TimeSeriesWindow,
    period: int,
    horizon: int,
    num_samples: int,
    seed: int,
) -> ForecastEnsemble:
    """Repeat the last observed period, with spread bootstrapped from
    seasonal differences y_t - y_{t-period}."""
    if period < 1:
        raise ValueError(f"period must be positive, got {period}")
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if num_samples < 2:
        raise ValueError(f"need at least 2 samples, got {num_samples}")
    values = np.asarray(history.values, dtype=float)
    if values.shape[0] < period:
        raise ValueError(
            f"history has {values.shape[0]} steps; need at least one full period ({period})"
        )
    pattern = values[-period:]
    point = pattern[np.arange(horizon) % period]
    residuals = values[period:] - values[:-period]
    rng = np.random.default_rng(int(seed))
    if residuals.size == 0:
        shocks = np.zeros((num_samples, horizon))
    else:
        shocks = rng.choice(residuals, size=(num_samples, horizon), replace=True)
    return ForecastEnsemble(point[None, :] + shocks)


def context_oracle(instance: TaskInstance, base: ForecastEnsemble) -> ForecastEnsemble:
    """Edit a context-blind ensemble using the instance's machine-readable
    effect metadata: apply spike multipliers inside the region of interest,
    bridge over would-be outage windows, and finally clip trajectories into
    the constraint bounds. Natural-language context is never read."""
    if base.horizon != instance.horizon:
        raise ValueError(
            f"ensemble horizon {base.horizon} does not match instance horizon {instance.horizon}"
        )
    traj = base.trajectories.copy()
    horizon = instance.horizon
    roi = sorted(instance.roi)
    kind = instance.adjustments.get("kind")
    if kind == "spike" and roi:
        traj[:, roi] *= float(instance.adjustments["multiplier"])
    elif kind == "no_outage_recurrence" and roi:
        anchors = [i for i in range(horizon) if i not in instance.roi]
        if anchors:
            for row in traj:
                row[roi] = np.interp(roi, anchors, row[anchors])

    spec = instance.constraint
    if spec.kind == "upper":
        traj = np.minimum(traj, spec.upper)
    elif spec.kind == "lower":
        traj = np.maximum(traj, spec.lower)
    elif spec.kind == "interval":
        traj = np.clip(traj, spec.lower, spec.upper)
    elif spec.kind == "variable_upper":
        for i, tau in spec.entries.items():
            if i < horizon:
                traj[:, i] = np.minimum(traj[:, i], tau)
    return ForecastEnsemble(traj)
