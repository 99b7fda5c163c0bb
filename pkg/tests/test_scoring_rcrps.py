"""Region-weighted score: branch weights, calibration, clipping, invariance."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cafbench.scoring import (
    ConstraintSpec,
    ForecastEnsemble,
    ScoreRecord,
    ScoringConfig,
    calibrate_alpha,
    crps_energy,
    rcrps,
)


def make_config(alpha=1.0, beta=10.0, clip=5.0):
    return ScoringConfig(alpha=alpha, beta=beta, clip_threshold=clip)


class TestCalibrateAlpha:
    def test_constant_ranges(self):
        futures = [np.array([0.0, 2.0, 1.0]), np.array([5.0, 7.0])]
        assert calibrate_alpha(futures) == pytest.approx(0.5)

    def test_mean_of_ranges(self):
        futures = [np.array([0.0, 1.0]), np.array([0.0, 3.0])]
        assert calibrate_alpha(futures) == pytest.approx(0.5)

    def test_all_constant_errors(self):
        with pytest.raises(ValueError, match="constant"):
            calibrate_alpha([np.array([2.0, 2.0]), np.array([5.0, 5.0])])

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="no calibration futures"):
            calibrate_alpha([])


class TestBranches:
    def test_half_weight_split_against_energy_oracle(self):
        rng = np.random.default_rng(11)
        ens = ForecastEnsemble(rng.normal(0.0, 1.0, (9, 2)))
        truth = np.array([0.2, -0.4])
        alpha = 0.7
        rec = rcrps(ens, truth, {0}, ConstraintSpec.none(), make_config(alpha=alpha),
                    compute_variance=False)
        c0 = crps_energy(ens.trajectories[:, 0], truth[0])
        c1 = crps_energy(ens.trajectories[:, 1], truth[1])
        assert rec.rcrps == pytest.approx(alpha * (c0 / 2.0 + c1 / 2.0), rel=1e-9)
        assert rec.term_roi == pytest.approx(alpha * c0 / 2.0, rel=1e-9)
        assert rec.term_non_roi == pytest.approx(alpha * c1 / 2.0, rel=1e-9)
        assert rec.term_constraint == 0.0

    def test_full_roi_equals_empty_roi(self):
        rng = np.random.default_rng(5)
        ens = ForecastEnsemble(rng.normal(2.0, 1.5, (7, 4)))
        truth = rng.normal(2.0, 1.0, 4)
        cfg = make_config(alpha=0.3)
        spec = ConstraintSpec.none()
        full = rcrps(ens, truth, set(range(4)), spec, cfg, compute_variance=False)
        empty = rcrps(ens, truth, set(), spec, cfg, compute_variance=False)
        assert full.rcrps == pytest.approx(empty.rcrps, rel=1e-12)
        # breakdown lands in the roi term when the region covers everything
        assert full.term_non_roi == 0.0
        assert empty.term_roi == 0.0

    def test_uneven_region_weights(self):
        # H=4, |I|=1: roi step carries alpha/2, the other three alpha/6 each
        ens = ForecastEnsemble(np.array([[1.0, 1.0, 1.0, 1.0],
                                         [3.0, 3.0, 3.0, 3.0]]))
        truth = np.zeros(4)
        rec = rcrps(ens, truth, {2}, ConstraintSpec.none(), make_config(),
                    compute_variance=False)
        c = crps_energy([1.0, 3.0], 0.0)
        assert rec.term_roi == pytest.approx(c / 2.0, rel=1e-12)
        assert rec.term_non_roi == pytest.approx(3 * c / 6.0, rel=1e-12)

    def test_terms_sum_to_total(self):
        rng = np.random.default_rng(23)
        ens = ForecastEnsemble(rng.normal(0, 1, (25, 6)))
        truth = rng.normal(0, 1, 6)
        spec = ConstraintSpec.upper_bound(0.5)
        rec = rcrps(ens, truth, {1, 4}, spec, make_config())
        assert rec.rcrps == pytest.approx(
            rec.term_roi + rec.term_non_roi + rec.term_constraint, rel=1e-12
        )


class TestPerfectForecast:
    @pytest.mark.parametrize("roi", [set(), {0}, {0, 1, 2}])
    def test_exact_zero(self, roi):
        truth = np.array([1.3, -2.4, 0.07])
        ens = ForecastEnsemble(np.tile(truth, (25, 1)))
        spec = ConstraintSpec.interval(-5.0, 5.0)
        rec = rcrps(ens, truth, roi, spec, make_config(alpha=0.123))
        assert rec.rcrps == 0.0
        assert rec.variance == 0.0
        assert not rec.significant_failure


class TestClipping:
    def test_raw_score_above_threshold_is_clipped_and_flagged(self):
        # two flat trajectories far from a constant truth: per-step CRPS is
        # exactly 1 after the spread correction, so alpha sets the raw score
        ens = ForecastEnsemble(np.array([[10.0, 10.0], [12.0, 12.0]]))
        truth = np.zeros(2)
        rec = rcrps(ens, truth, set(), ConstraintSpec.none(), make_config(alpha=0.7),
                    compute_variance=False)
        assert rec.rcrps == pytest.approx(7.0, rel=1e-9)
        assert rec.rcrps_clipped == pytest.approx(5.0)
        assert rec.significant_failure

    def test_below_threshold_untouched(self):
        ens = ForecastEnsemble(np.array([[1.0, 1.0], [2.0, 2.0]]))
        rec = rcrps(ens, np.zeros(2), set(), ConstraintSpec.none(), make_config(),
                    compute_variance=False)
        assert rec.rcrps_clipped == rec.rcrps
        assert not rec.significant_failure


class TestBetaMonotonicity:
    def test_increasing_beta_increases_score_with_two_violators(self):
        ens = ForecastEnsemble(np.array([[3.0], [4.0], [0.5]]))
        truth = np.array([0.5])
        spec = ConstraintSpec.upper_bound(1.0)
        scores = [
            rcrps(ens, truth, set(), spec, make_config(beta=b), compute_variance=False).rcrps
            for b in (0.0, 5.0, 10.0, 20.0)
        ]
        assert all(b > a for a, b in zip(scores, scores[1:]))


class TestAffineInvariance:
    def test_transforming_everything_preserves_score(self):
        rng = np.random.default_rng(77)
        for trial in range(20):
            m, h = 8, 5
            raw = rng.normal(0, 2, (m, h))
            cal = [rng.normal(0, 2, h) for _ in range(4)]
            lo, hi = -3.0, 3.0
            truth = np.clip(rng.normal(0, 2, h), lo, hi)
            spec = ConstraintSpec.interval(lo, hi)
            roi = {1, 3}
            a = float(rng.uniform(0.1, 10.0))
            b = float(rng.normal(0, 5))

            cfg = make_config(alpha=calibrate_alpha(cal))
            base = rcrps(ForecastEnsemble(raw), truth, roi, spec, cfg)

            cfg2 = make_config(alpha=calibrate_alpha([a * c + b for c in cal]))
            spec2 = ConstraintSpec.interval(a * lo + b, a * hi + b)
            moved = rcrps(ForecastEnsemble(a * raw + b), a * truth + b, roi, spec2, cfg2)
            assert moved.rcrps == pytest.approx(base.rcrps, rel=1e-9, abs=1e-9)
            assert moved.variance == pytest.approx(base.variance, rel=1e-6, abs=1e-12)


class TestScoreRecord:
    def test_json_round_trip(self):
        rec = ScoreRecord(
            rcrps=1.5, rcrps_clipped=1.5, term_roi=0.5, term_non_roi=0.6,
            term_constraint=0.4, variance=0.01, significant_failure=False,
        )
        again = ScoreRecord.from_json_dict(rec.to_json_dict())
        assert again == rec

    def test_config_validation(self):
        with pytest.raises(ValueError, match="alpha"):
            ScoringConfig(alpha=0.0)
        with pytest.raises(ValueError, match="alpha"):
            ScoringConfig(alpha=float("nan"))
        with pytest.raises(ValueError, match="beta"):
            ScoringConfig(alpha=1.0, beta=-1.0)
        with pytest.raises(ValueError, match="clip_threshold"):
            ScoringConfig(alpha=1.0, clip_threshold=0.0)


class TestNearNonNegativity:
    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_random_inputs_not_meaningfully_negative(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 30))
        h = int(rng.integers(1, 8))
        scale = float(rng.uniform(0.5, 50.0))
        ens = ForecastEnsemble(rng.normal(0, scale, (m, h)))
        truth = rng.normal(0, scale, h)
        k = int(rng.integers(0, h + 1))
        roi = set(rng.choice(h, size=k, replace=False).tolist())
        alpha = 1.0 / scale
        rec = rcrps(ens, truth, roi, ConstraintSpec.none(), make_config(alpha=alpha),
                    compute_variance=False)
        assert rec.rcrps >= -1e-6 * alpha * scale


class TestValidationErrors:
    def test_dimension_mismatch(self):
        ens = ForecastEnsemble(np.ones((3, 4)))
        with pytest.raises(ValueError, match="does not match"):
            rcrps(ens, np.zeros(3), set(), ConstraintSpec.none(), make_config())

    def test_bad_roi(self):
        ens = ForecastEnsemble(np.random.default_rng(0).normal(size=(3, 4)))
        with pytest.raises(ValueError, match="out of range"):
            rcrps(ens, np.zeros(4), {7}, ConstraintSpec.none(), make_config())

    def test_ensemble_needs_two_samples(self):
        with pytest.raises(ValueError, match="at least 2"):
            ForecastEnsemble(np.ones((1, 4)))

    def test_ensemble_rejects_nan(self):
        bad = np.ones((3, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ForecastEnsemble(bad)
