"""Scoring rules for context-aided probabilistic forecasts.

The central quantity is a region-weighted, constraint-penalized CRPS: per-step
sample CRPS estimates are averaged with half the mass on a region of interest,
a threshold-violation penalty is added via a threshold-weighted CRPS on the
constraint-violation functional, and the total is normalized by a per-task
scale calibrated from held-out futures. A closed-form covariance estimator for
pairs of sample-CRPS values yields an error bar for the final score.

All functions here consume plain numeric arrays. Natural-language context
never reaches this module; it only ever flows into prompts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ForecastEnsemble",
    "ConstraintSpec",
    "ScoringConfig",
    "ScoreRecord",
    "crps_pwm",
    "crps_energy",
    "constraint_violation",
    "tw_crps_constraint",
    "calibrate_alpha",
    "rcrps",
    "crps_covariance",
    "rcrps_variance",
]

CONSTRAINT_KINDS = ("none", "upper", "lower", "interval", "variable_upper")


def _readonly(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ForecastEnsemble:
    """A set of M sampled trajectories over a common horizon H.

    Attributes
    ----------
    trajectories : np.ndarray
        Array of shape (M, H), M >= 2, all values finite.
    """

    trajectories: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.trajectories, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError(f"trajectories must be 2-D (M, H), got shape {t.shape}")
        if t.shape[0] < 2:
            raise ValueError(f"need at least 2 sample trajectories, got {t.shape[0]}")
        if t.shape[1] < 1:
            raise ValueError("horizon must be at least 1")
        if not np.all(np.isfinite(t)):
            raise ValueError("trajectories contain non-finite values")
        object.__setattr__(self, "trajectories", _readonly(t))

    @property
    def num_samples(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]


@dataclass(frozen=True)
class ConstraintSpec:
    """Machine-readable constraint on future values.

    kind is one of "none", "upper", "lower", "interval", "variable_upper".
    `lower`/`upper` hold scalar thresholds where applicable; `entries` maps
    step index -> threshold for the variable upper-bound kind.
    """

    kind: str = "none"
    lower: float | None = None
    upper: float | None = None
    entries: Mapping[int, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "none" and not (
            self.lower is None and self.upper is None and self.entries is None
        ):
            raise ValueError("kind 'none' takes no thresholds")
        if self.kind == "upper" and self.upper is None:
            raise ValueError("kind 'upper' requires an upper threshold")
        if self.kind == "lower" and self.lower is None:
            raise ValueError("kind 'lower' requires a lower threshold")
        if self.kind == "interval":
            if self.lower is None or self.upper is None:
                raise ValueError("kind 'interval' requires both thresholds")
            if not self.lower <= self.upper:
                raise ValueError(
                    f"interval bounds out of order: [{self.lower}, {self.upper}]"
                )
        if self.kind == "variable_upper":
            if not self.entries:
                raise ValueError("kind 'variable_upper' requires non-empty entries")
            fixed = {}
            for idx, tau in dict(self.entries).items():
                i = int(idx)
                if i < 0:
                    raise ValueError(f"variable_upper index {i} is negative")
                fixed[i] = float(tau)
            object.__setattr__(self, "entries", fixed)

    @classmethod
    def none(cls) -> "ConstraintSpec":
        return cls(kind="none")

    @classmethod
    def upper_bound(cls, tau: float) -> "ConstraintSpec":
        return cls(kind="upper", upper=float(tau))

    @classmethod
    def lower_bound(cls, tau: float) -> "ConstraintSpec":
        return cls(kind="lower", lower=float(tau))

    @classmethod
    def interval(cls, lower: float, upper: float) -> "ConstraintSpec":
        return cls(kind="interval", lower=float(lower), upper=float(upper))

    @classmethod
    def variable_upper(cls, entries: Mapping[int, float]) -> "ConstraintSpec":
        return cls(kind="variable_upper", entries=dict(entries))

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.lower is not None:
            out["lower"] = self.lower
        if self.upper is not None:
            out["upper"] = self.upper
        if self.entries is not None:
            out["entries"] = {str(k): v for k, v in sorted(self.entries.items())}
        return out

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ConstraintSpec":
        entries = data.get("entries")
        return cls(
            kind=data["kind"],
            lower=data.get("lower"),
            upper=data.get("upper"),
            entries={int(k): float(v) for k, v in entries.items()}
            if entries is not None
            else None,
        )


@dataclass(frozen=True)
class ScoringConfig:
    """Weights and thresholds for the region-weighted score.

    alpha is the per-task normalization (inverse mean calibration range),
    beta weights the constraint-violation penalty, and raw scores above
    clip_threshold are clipped and flagged as significant failures.
    """

    alpha: float
    beta: float = 10.0
    clip_threshold: float = 5.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and positive, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.clip_threshold <= 0:
            raise ValueError(f"clip_threshold must be positive, got {self.clip_threshold}")


@dataclass(frozen=True)
class ScoreRecord:
    """One scored (forecast, instance) pair with its breakdown and error bar."""

    rcrps: float
    rcrps_clipped: float
    term_roi: float
    term_non_roi: float
    term_constraint: float
    variance: float
    significant_failure: bool

    def to_json_dict(self) -> dict:
        return {
            "rcrps": self.rcrps,
            "rcrps_clipped": self.rcrps_clipped,
            "term_roi": self.term_roi,
            "term_non_roi": self.term_non_roi,
            "term_constraint": self.term_constraint,
            "variance": self.variance,
            "significant_failure": self.significant_failure,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ScoreRecord":
        return cls(
            rcrps=float(data["rcrps"]),
            rcrps_clipped=float(data["rcrps_clipped"]),
            term_roi=float(data["term_roi"]),
            term_non_roi=float(data["term_non_roi"]),
            term_constraint=float(data["term_constraint"]),
            variance=float(data["variance"]),
            significant_failure=bool(data["significant_failure"]),
        )


def _as_samples(samples: Sequence[float] | np.ndarray, minimum: int = 2) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"samples must be 1-D, got shape {x.shape}")
    if x.size < minimum:
        raise ValueError(f"need at least {minimum} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


def _as_truth(truth: float) -> float:
    t = float(truth)
    if not np.isfinite(t):
        raise ValueError("ground-truth value is not finite")
    return t


def crps_pwm(samples: Sequence[float] | np.ndarray, truth: float) -> float:
    """Unbiased sample CRPS via probability-weighted moments, O(M log M).

    With samples sorted ascending (1-indexed) the estimate is

        mean |x_n - x|  +  mean x_n  -  2/(M(M-1)) * sum (n-1) x_n.

    Samples are centered on the truth before the moment terms are formed;
    the estimate is unchanged (the CRPS is translation invariant) and a
    degenerate ensemble equal to the truth scores exactly zero.
    """
    x = _as_samples(samples)
    t = _as_truth(truth)
    m = x.size
    y = np.sort(x, kind="stable") - t
    spread = 2.0 / (m * (m - 1)) * float(np.dot(np.arange(m, dtype=np.float64), y))
    return float(np.mean(np.abs(y)) + np.mean(y) - spread)


def crps_energy(samples: Sequence[float] | np.ndarray, truth: float) -> float:
    """Unbiased sample CRPS in energy form, O(M^2).

    mean |x_n - x|  -  1/(2 M (M-1)) * sum_{n,n'} |x_n - x_{n'}|.

    Kept as an independent cross-check for the probability-weighted-moment
    form; the two agree to floating-point accuracy on identical inputs.
    """
    x = _as_samples(samples)
    t = _as_truth(truth)
    m = x.size
    abs_err = float(np.mean(np.abs(x - t)))
    spread = float(np.abs(x[:, None] - x[None, :]).sum()) / (2.0 * m * (m - 1))
    return abs_err - spread


def constraint_violation(spec: ConstraintSpec, trajectory: Sequence[float] | np.ndarray) -> float:
    """Mean threshold exceedance of a single trajectory, >= 0.

    Upper bound: mean over steps of max(0, x_i - tau+). Lower bound:
    mean of max(0, tau- - x_i). Interval: sum of both. Variable upper
    bound: mean over the constrained indices only. "none" is always 0.
    """
    x = np.asarray(trajectory, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"trajectory must be non-empty 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("trajectory contains non-finite values")
    if spec.kind == "none":
        return 0.0
    if spec.kind == "upper":
        return float(np.mean(np.maximum(0.0, x - spec.upper)))
    if spec.kind == "lower":
        return float(np.mean(np.maximum(0.0, spec.lower - x)))
    if spec.kind == "interval":
        over = np.mean(np.maximum(0.0, x - spec.upper))
        under = np.mean(np.maximum(0.0, spec.lower - x))
        return float(over + under)
    # variable_upper
    idx = np.fromiter(spec.entries.keys(), dtype=np.int64)
    if int(idx.max()) >= x.size:
        raise ValueError(
            f"constraint index {int(idx.max())} out of range for horizon {x.size}"
        )
    taus = np.fromiter((spec.entries[int(i)] for i in idx), dtype=np.float64)
    return float(np.mean(np.maximum(0.0, x[idx] - taus)))


def tw_crps_constraint(ensemble: ForecastEnsemble, spec: ConstraintSpec) -> float:
    """Threshold-weighted CRPS of the constraint-violation functional.

    Each trajectory is reduced to its scalar violation v_C >= 0 and the M
    scalars are scored against a target of 0 with the sample CRPS. Zero when
    every trajectory satisfies the constraint; the estimator puts no weight
    on the single largest violation, so it stays zero with exactly one
    violating trajectory and is positive once two or more violate.
    """
    if spec.kind == "none":
        return 0.0
    v = np.array(
        [constraint_violation(spec, traj) for traj in ensemble.trajectories],
        dtype=np.float64,
    )
    return crps_pwm(v, 0.0)


def calibrate_alpha(calibration_futures: Iterable[Sequence[float] | np.ndarray]) -> float:
    """Inverse of the mean value range across held-out calibration futures."""
    ranges = []
    for fut in calibration_futures:
        x = np.asarray(fut, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("calibration futures must be non-empty 1-D arrays")
        if not np.all(np.isfinite(x)):
            raise ValueError("calibration future contains non-finite values")
        ranges.append(float(x.max() - x.min()))
    if not ranges:
        raise ValueError("no calibration futures supplied")
    mean_range = float(np.mean(ranges))
    if mean_range <= 0.0:
        raise ValueError("all calibration futures are constant; scale is undefined")
    return 1.0 / mean_range


def _checked_roi(roi: Iterable[int], horizon: int) -> np.ndarray:
    idx = np.array(sorted({int(i) for i in roi}), dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= horizon):
        raise ValueError(f"region of interest {idx.tolist()} out of range for horizon {horizon}")
    return idx


def _step_weights(horizon: int, roi_idx: np.ndarray, alpha: float) -> np.ndarray:
    """Per-step weights: half mass on the region of interest, half off it.

    An empty or full region degenerates to equal weights alpha / H.
    """
    k = int(roi_idx.size)
    if k == 0 or k == horizon:
        return np.full(horizon, alpha / horizon)
    w = np.full(horizon, alpha / (2.0 * (horizon - k)))
    w[roi_idx] = alpha / (2.0 * k)
    return w


def rcrps(
    ensemble: ForecastEnsemble,
    truth: Sequence[float] | np.ndarray,
    roi: Iterable[int],
    spec: ConstraintSpec,
    config: ScoringConfig,
    compute_variance: bool = True,
) -> ScoreRecord:
    """Region-weighted, constraint-penalized, scale-normalized CRPS.

    Per-step sample CRPS values are combined with half the weight inside the
    region of interest and half outside (equal weights when the region is
    empty or covers the whole horizon), the constraint penalty beta * the
    threshold-weighted CRPS is added, and everything is scaled by alpha.
    Scores above the clip threshold are clipped and flagged.
    """
    y = np.asarray(truth, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"truth must be 1-D, got shape {y.shape}")
    if y.size != ensemble.horizon:
        raise ValueError(
            f"truth length {y.size} does not match ensemble horizon {ensemble.horizon}"
        )
    if not np.all(np.isfinite(y)):
        raise ValueError("truth contains non-finite values")
    horizon = ensemble.horizon
    roi_idx = _checked_roi(roi, horizon)

    per_step = np.array(
        [crps_pwm(ensemble.trajectories[:, i], y[i]) for i in range(horizon)],
        dtype=np.float64,
    )
    weights = _step_weights(horizon, roi_idx, config.alpha)

    in_roi = np.zeros(horizon, dtype=bool)
    in_roi[roi_idx] = True
    if roi_idx.size == horizon:
        term_roi = float(np.dot(weights, per_step))
        term_non_roi = 0.0
    elif roi_idx.size == 0:
        term_roi = 0.0
        term_non_roi = float(np.dot(weights, per_step))
    else:
        term_roi = float(np.dot(weights[in_roi], per_step[in_roi]))
        term_non_roi = float(np.dot(weights[~in_roi], per_step[~in_roi]))

    term_constraint = config.alpha * config.beta * tw_crps_constraint(ensemble, spec)
    raw = term_roi + term_non_roi + term_constraint
    variance = (
        rcrps_variance(ensemble, y, roi_idx, spec, config) if compute_variance else 0.0
    )
    return ScoreRecord(
        rcrps=raw,
        rcrps_clipped=min(raw, config.clip_threshold),
        term_roi=term_roi,
        term_non_roi=term_non_roi,
        term_constraint=term_constraint,
        variance=variance,
        significant_failure=raw > config.clip_threshold,
    )


def _cov_parts(samples: np.ndarray, truth: float):
    f = np.abs(samples - truth)
    d = np.abs(samples[:, None] - samples[None, :])
    r: np.ndarray = d.sum(axis=1)
    return f, d, r


def _cov_from_parts(
    f: np.ndarray,
    g: np.ndarray,
    da: np.ndarray,
    db: np.ndarray,
    ra: np.ndarray,
    rb: np.ndarray,
) -> float:
    """Covariance of two sample-CRPS estimates sharing M joint draws.

    Every population expectation in the closed-form covariance is replaced by
    its unbiased U-statistic over distinct index tuples; sums over tuples are
    reduced to O(M^2) with inclusion-exclusion. The expression is arranged so
    swapping the two columns gives a bitwise-identical result.
    """
    m = float(f.size)
    sf = float(f.sum())
    sg = float(g.sum())
    sda = float(ra.sum())
    sdb = float(rb.sum())
    if sda == 0.0 or sdb == 0.0:
        # A constant column has no sampling spread; every term involving it
        # cancels exactly in the algebra, so short-circuit the float noise.
        return 0.0
    p_joint = float(f @ g)
    q_pair = float((da * db).sum())
    v_fork = float(ra @ rb) - q_pair
    w_f_db = float(f @ rb)
    w_g_da = float(g @ ra)

    p2 = m * (m - 1.0)
    p3 = p2 * (m - 2.0)
    p4 = p3 * (m - 3.0)

    # Independent-product terms: E|X_i - x_i| E|X_j - x_j|, its spread
    # counterparts, and E|X_i - X'_i| E|X_j - X'_j| on 4 distinct draws.
    u_absprod = (sf * sg - p_joint) / p2
    u_abs_spread = (sf * sdb - 2.0 * w_f_db) / p3
    u_spread_abs = (sg * sda - 2.0 * w_g_da) / p3
    u_spreadprod = (sda * sdb - 4.0 * v_fork - 2.0 * q_pair) / p4

    # Joint-draw terms: same-draw product, one-common-draw products, the
    # shared-pair spread product, and the common-fork spread product.
    u_joint = p_joint / m
    u_d_then_g = w_g_da / p2
    u_f_then_d = w_f_db / p2
    u_pair_spread = q_pair / p2
    u_fork_spread = v_fork / p3

    sym_ad_cb = u_abs_spread + u_spread_abs
    sym_mixed = u_d_then_g + u_f_then_d
    inner = -u_absprod + sym_ad_cb + u_joint - sym_mixed
    return (
        inner / m
        + (m - 2.0) / p2 * u_fork_spread
        - (2.0 * m - 3.0) / (2.0 * p2) * u_spreadprod
        + u_pair_spread / (2.0 * p2)
    )


def crps_covariance(
    samples_i: Sequence[float] | np.ndarray,
    samples_j: Sequence[float] | np.ndarray,
    truth_i: float,
    truth_j: float,
) -> float:
    """Estimate Cov(CRPS_i, CRPS_j) from M jointly drawn sample pairs.

    samples_i[n] and samples_j[n] must come from the same underlying draw
    (the n-th trajectory evaluated at two steps). Requires M >= 4 so every
    U-statistic has enough distinct indices.
    """
    a = _as_samples(samples_i, minimum=4)
    b = _as_samples(samples_j, minimum=4)
    if a.size != b.size:
        raise ValueError(f"sample columns differ in length: {a.size} vs {b.size}")
    ti = _as_truth(truth_i)
    tj = _as_truth(truth_j)
    fa, da, ra = _cov_parts(a, ti)
    fb, db, rb = _cov_parts(b, tj)
    return _cov_from_parts(fa, fb, da, db, ra, rb)


def rcrps_variance(
    ensemble: ForecastEnsemble,
    truth: Sequence[float] | np.ndarray,
    roi: Iterable[int],
    spec: ConstraintSpec,
    config: ScoringConfig,
) -> float:
    """Variance estimate for the region-weighted score, clipped at zero.

    The score is a fixed linear combination of per-step sample-CRPS values
    plus the constraint term, so its variance is w^T C w over the pairwise
    CRPS covariance matrix (constraint column included when present).
    """
    y = np.asarray(truth, dtype=np.float64)
    if y.size != ensemble.horizon:
        raise ValueError(
            f"truth length {y.size} does not match ensemble horizon {ensemble.horizon}"
        )
    if ensemble.num_samples < 4:
        raise ValueError(
            f"variance estimation needs at least 4 samples, got {ensemble.num_samples}"
        )
    horizon = ensemble.horizon
    roi_idx = _checked_roi(roi, horizon)

    columns = [ensemble.trajectories[:, i] for i in range(horizon)]
    truths = list(y)
    weights = list(_step_weights(horizon, roi_idx, config.alpha))
    if spec.kind != "none":
        v = np.array(
            [constraint_violation(spec, traj) for traj in ensemble.trajectories],
            dtype=np.float64,
        )
        columns.append(v)
        truths.append(0.0)
        weights.append(config.alpha * config.beta)

    parts = [_cov_parts(col, t) for col, t in zip(columns, truths)]
    w = np.asarray(weights, dtype=np.float64)
    total = 0.0
    for a in range(len(parts)):
        fa, da, ra = parts[a]
        total += w[a] * w[a] * _cov_from_parts(fa, fa, da, da, ra, ra)
        for b in range(a + 1, len(parts)):
            fb, db, rb = parts[b]
            total += 2.0 * w[a] * w[b] * _cov_from_parts(fa, fb, da, db, ra, rb)
    return max(0.0, float(total))
