import numpy as np
import pytest
from scipy import stats

from bvqa.errors import DegenerateInputError
from bvqa.evaluation import (
    MetricsRecord,
    coverage_uniformity,
    diversity_profile,
    evaluate_split_protocol,
    inlsa_calibrate,
    krcc,
    logistic4_fit,
    mos_rescale,
    plcc_rmse,
    relative_range,
    srcc,
    video_diversity_features,
)
from bvqa.learning import GridSearchConfig
from conftest import noise_triple
from synthetic import make_video


class TestRankCorrelations:
    def test_perfect_monotone(self):
        x = np.array([1.0, 2.0, 5.0, 9.0])
        assert srcc(x, x**3) == pytest.approx(1.0)
        assert krcc(x, 2 * x + 1) == pytest.approx(1.0)

    def test_reversed(self):
        x = np.arange(10.0)
        assert srcc(x, -x) == pytest.approx(-1.0)
        assert krcc(x, -x) == pytest.approx(-1.0)

    def test_matches_scipy_with_ties(self, rng):
        for _ in range(30):
            n = int(rng.integers(5, 40))
            x = rng.integers(0, 6, n).astype(float)
            y = rng.integers(0, 6, n).astype(float)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            assert srcc(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)
            assert krcc(x, y) == pytest.approx(stats.kendalltau(x, y).statistic, abs=1e-12)

    def test_degenerate_returns_none(self):
        assert srcc(np.ones(5), np.arange(5.0)) is None
        assert krcc(np.arange(5.0), np.ones(5)) is None

    def test_length_validation(self):
        with pytest.raises(ValueError):
            srcc([1.0, 2.0], [1.0, 2.0])


class TestLogisticFit:
    def test_self_fit_recovers_curve(self):
        x = np.linspace(-3, 3, 50)
        y = 2.0 + 3.0 / (1.0 + np.exp(-(x - 0.5) / 0.8))
        fit = logistic4_fit(x, y)
        assert fit.converged and not fit.linear_fallback
        plcc, rmse = plcc_rmse(x, y, fit)
        assert plcc == pytest.approx(1.0, abs=1e-6)
        assert rmse < 1e-6

    def test_decreasing_relationship(self):
        x = np.linspace(0, 1, 40)
        y = 5.0 - 4.0 * x + np.random.default_rng(0).normal(0, 0.05, 40)
        plcc, _ = plcc_rmse(x, y)
        assert plcc > 0.99  # the logistic map flips sign, PLCC is on mapped scores

    def test_constant_scores_degenerate(self):
        with pytest.raises(DegenerateInputError):
            logistic4_fit(np.ones(10), np.arange(10.0))

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 5"):
            logistic4_fit(np.arange(4.0), np.arange(4.0))


class TestSplitProtocol:
    GRID = GridSearchConfig(c_grid=(2.0, 32.0), gamma_grid=(0.25, 1.0))

    def make_data(self, rng, n=30):
        X = rng.uniform(0, 1, (n, 4))
        y = 4.0 * X[:, 0] + X[:, 1] + rng.normal(0, 0.1, n)
        return X, y

    def test_learns_synthetic_relation(self, rng):
        X, y = self.make_data(rng, n=40)
        record = evaluate_split_protocol(X, y, grid=self.GRID, iters=5, seed=0)
        assert record.median["srcc"] > 0.8
        assert len(record.srcc_splits) == 5

    def test_reproducible_for_seed(self, rng):
        X, y = self.make_data(rng)
        a = evaluate_split_protocol(X, y, grid=self.GRID, iters=3, seed=11)
        b = evaluate_split_protocol(X, y, grid=self.GRID, iters=3, seed=11)
        assert a.to_json() == b.to_json()

    def test_record_summary_skips_none(self):
        record = MetricsRecord([0.5, None, 0.7], [0.1, 0.2, None], [None, None, None], [1.0, 2.0, 3.0])
        assert record.median["srcc"] == pytest.approx(0.6)
        assert record.median["plcc"] is None

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="at least 10"):
            evaluate_split_protocol(np.zeros((5, 2)), np.zeros(5))


class TestMosRescale:
    def test_konvid_endpoints(self):
        np.testing.assert_allclose(mos_rescale([1.0], "konvid"), [0.9008], atol=1e-4)
        np.testing.assert_allclose(mos_rescale([5.0], "konvid"), [5.3972], atol=1e-4)

    def test_livevqc_endpoints(self):
        np.testing.assert_allclose(mos_rescale([0.0], "livevqc"), [2.0460], atol=1e-4)
        np.testing.assert_allclose(mos_rescale([100.0], "livevqc"), [4.8988], atol=1e-4)

    def test_monotone(self):
        y = np.linspace(1, 5, 20)
        assert np.all(np.diff(mos_rescale(y, "konvid")) > 0)

    def test_range_validation(self):
        with pytest.raises(ValueError, match="konvid"):
            mos_rescale([0.5], "konvid")
        with pytest.raises(ValueError, match="no rescaling"):
            mos_rescale([3.0], "tid2013")


class TestInlsa:
    def test_recovers_affine_map(self, rng):
        obj = rng.uniform(0, 10, 80)
        mos_anchor = 0.4 * obj + 1.0
        # second study rated the same stimuli on a different affine scale
        mos_other = (mos_anchor - (-2.0)) / 2.0
        cal = inlsa_calibrate([(obj, mos_anchor), (obj, mos_other)])
        assert cal.maps[0] == (1.0, 0.0)
        slope, intercept = cal.maps[1]
        assert slope == pytest.approx(2.0, abs=1e-6)
        assert intercept == pytest.approx(-2.0, abs=1e-6)

    def test_idempotent(self, rng):
        obj = rng.uniform(0, 10, 60)
        mos1 = 0.3 * obj + 1.5
        mos2 = 0.6 * obj - 0.5
        cal = inlsa_calibrate([(obj, mos1), (obj, mos2)])
        aligned = cal.apply(1, mos2)
        cal2 = inlsa_calibrate([(obj, mos1), (obj, aligned)])
        assert cal2.maps[1][0] == pytest.approx(1.0, abs=1e-6)
        assert cal2.maps[1][1] == pytest.approx(0.0, abs=1e-6)

    def test_single_dataset_identity(self, rng):
        cal = inlsa_calibrate([(rng.uniform(0, 1, 20), rng.uniform(1, 5, 20))])
        assert cal.maps == [(1.0, 0.0)] and cal.iterations == 0

    def test_constant_mos_rejected(self, rng):
        with pytest.raises(DegenerateInputError):
            inlsa_calibrate([(rng.uniform(0, 1, 10), np.ones(10))])


class TestDiversity:
    def test_feature_vector_shape(self, rng):
        frames = make_video(rng, n_frames=25)
        v = video_diversity_features(frames)
        assert v.shape == (6,)
        assert np.all(np.isfinite(v)) and v[1] > 0

    def test_static_video_zero_ti(self, rng):
        frame = noise_triple(rng)
        v = video_diversity_features([frame] * 21)
        assert v[5] == 0.0

    def test_relative_range_hand_values(self):
        r = relative_range([np.array([0.0, 5.0]), np.array([2.0, 10.0])])
        np.testing.assert_allclose(r, [0.5, 0.8], atol=1e-12)

    def test_uniformity_extremes(self):
        uniform = np.repeat(np.linspace(0.05, 0.95, 10), 5)  # one value per bin
        point = np.full(50, 0.5)
        u = coverage_uniformity([uniform, point], bins=10)
        assert u[0] == pytest.approx(1.0, abs=1e-12)
        assert u[1] == 0.0

    def test_profile_flags_short_videos(self, rng):
        datasets = {
            "a": [("v1", make_video(rng, n_frames=12)), ("v2", make_video(rng, n_frames=3))],
            "b": [("w1", make_video(rng, n_frames=12))],
        }
        profile = diversity_profile(datasets)
        assert profile.flagged_short == ["a/v2"]
        assert profile.per_video["a"].shape == (2, 6)
        assert set(profile.relative_range) == {"a", "b"}
        assert "feature_names" in profile.to_json()
