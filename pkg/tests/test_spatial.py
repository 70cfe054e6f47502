import numpy as np
import pytest
from scipy.stats import kurtosis

import bvqa.temporal  # noqa: F401  (registers the tlvqm layouts)
from bvqa.errors import DegenerateInputError, FeatureExtractionError
from bvqa.media_io import FramePlane
from bvqa.registry import REGISTRY
from bvqa.spatial import (
    aggd_fit,
    brisque_features,
    ggd_fit,
    gmlog_features,
    higrade_grad_features,
    mscn_transform,
)


class TestMscn:
    def test_constant_frame_all_zero(self):
        field = mscn_transform(np.full((64, 64), 100.0))
        np.testing.assert_allclose(field.values, 0.0, atol=1e-12)
        assert np.all(field.sigma >= 0)

    def test_checkerboard_bounded(self):
        board = np.indices((64, 64)).sum(axis=0) % 2 * 255.0
        v = mscn_transform(board).values
        assert np.all(np.abs(v) <= 2.0)

    def test_white_noise_statistics(self):
        # Monte-Carlo oracle over 10 seeds. With the 7x7 sigma=7/6 window the
        # local sigma estimate correlates with the numerator, so the field is
        # mildly sub-Gaussian: the oracle puts excess kurtosis near -0.65.
        kurts = []
        for seed in range(10):
            img = np.clip(np.random.default_rng(seed).normal(128, 30, (128, 128)), 0, 255)
            v = mscn_transform(img).values
            assert abs(v.mean()) < 0.5
            kurts.append(kurtosis(v.ravel()))
        assert all(-0.9 < k < 0.0 for k in kurts)

    def test_too_small_frame(self):
        with pytest.raises(FeatureExtractionError, match="window"):
            mscn_transform(np.zeros((4, 4)))


class TestGgdFit:
    def test_gaussian_recovery(self):
        x = np.random.default_rng(7).normal(0, 1, 100_000)
        fit = ggd_fit(x)
        assert 1.9 <= fit.alpha <= 2.1
        assert 0.95 <= fit.sigma <= 1.05

    def test_laplacian_recovery(self):
        x = np.random.default_rng(7).laplace(0, 1 / np.sqrt(2), 100_000)
        assert 0.93 <= ggd_fit(x).alpha <= 1.07

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            ggd_fit(np.full(200, 3.0))

    def test_consistency_with_sample_count(self):
        # recovery error shrinks (within noise) as samples grow
        errs = []
        for n in (1_000, 10_000, 100_000):
            per_seed = [
                abs(ggd_fit(np.random.default_rng(s).normal(0, 1, n)).alpha - 2.0)
                for s in range(10)
            ]
            errs.append(np.mean(per_seed))
        assert errs[2] < errs[0]


class TestAggdFit:
    def test_symmetric_gaussian(self):
        x = np.random.default_rng(3).normal(0, 1, 100_000)
        fit = aggd_fit(x)
        assert abs(fit.sigma_l - fit.sigma_r) / fit.sigma_l < 0.05
        assert abs(fit.eta) < 0.05

    def test_right_skew_recovery(self):
        rng = np.random.default_rng(3)
        x = np.concatenate(
            [-np.abs(rng.normal(0, 1, 50_000)), np.abs(rng.normal(0, 2, 50_000))]
        )
        fit = aggd_fit(x)
        assert 1.8 <= fit.sigma_r / fit.sigma_l <= 2.2
        assert fit.eta > 0

    def test_one_sided(self):
        with pytest.raises(DegenerateInputError, match="one-sided"):
            aggd_fit(np.abs(np.random.default_rng(0).normal(0, 1, 1000)))


class TestBrisque:
    def test_constant_frame_degenerate(self):
        with pytest.raises(FeatureExtractionError):
            brisque_features(FramePlane(np.full((64, 64), 128.0)))

    def test_white_noise_alpha(self):
        # Oracle over 10 seeds: MSCN of white noise is sub-Gaussian (see
        # TestMscn), so the first-scale GGD shape lands near 3.2.
        for seed in range(10):
            img = np.clip(np.random.default_rng(seed).normal(128, 30, (128, 128)), 0, 255)
            alpha = brisque_features(FramePlane(img)).values[0]
            assert 2.5 < alpha < 4.0

    def test_determinism(self, noise_frame):
        a = brisque_features(noise_frame).values
        b = brisque_features(noise_frame).values
        np.testing.assert_array_equal(a, b)

    def test_length_and_registry(self, noise_frame):
        vec = brisque_features(noise_frame)
        assert len(vec) == 36
        assert len(REGISTRY.get("brisque")) == 36


class TestGmlog:
    def test_marginals_sum_to_one(self, noise_frame):
        v = gmlog_features(noise_frame).values
        assert v[:10].sum() == pytest.approx(1.0, abs=1e-9)
        assert v[10:20].sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all((v[:20] >= 0) & (v[:20] <= 1))

    def test_constant_frame_degenerate(self):
        with pytest.raises(FeatureExtractionError):
            gmlog_features(FramePlane(np.full((64, 64), 50.0)))

    def test_ramp_log_mass_in_first_bin(self):
        ramp = FramePlane(np.tile(np.linspace(0, 255, 64), (64, 1)))
        v = gmlog_features(ramp).values
        assert v[10] > 0.9  # LoG of a linear ramp is ~0 away from borders

    def test_length(self, noise_frame):
        assert len(gmlog_features(noise_frame)) == 40


class TestHigradeGrad:
    @staticmethod
    def lab_noise(rng, a_scale=1.0):
        l_chan = FramePlane(np.clip(rng.normal(50, 15, (64, 64)), 0, 100))
        a_chan = FramePlane(rng.normal(0, 10 * a_scale, (64, 64)))
        b_chan = FramePlane(rng.normal(0, 10, (64, 64)))
        return l_chan, a_chan, b_chan

    def test_gray_frame_errors_then_sentinel(self):
        l_chan = FramePlane(np.clip(np.random.default_rng(0).normal(50, 15, (64, 64)), 0, 100))
        flat = FramePlane(np.zeros((64, 64)))
        with pytest.raises(FeatureExtractionError, match="channel a"):
            higrade_grad_features(l_chan, flat, flat)
        vec = higrade_grad_features(l_chan, flat, flat, on_degenerate="sentinel")
        np.testing.assert_array_equal(vec.values[12:36], 0.0)
        assert np.any(vec.values[:12] != 0)

    def test_noise_frame_finite(self, rng):
        vec = higrade_grad_features(*self.lab_noise(rng))
        assert len(vec) == 36
        assert np.all(np.isfinite(vec.values))

    def test_a_channel_contrast_localized(self):
        rng = np.random.default_rng(5)
        l_chan, a_chan, b_chan = self.lab_noise(rng)
        base = higrade_grad_features(l_chan, a_chan, b_chan).values
        doubled = higrade_grad_features(
            l_chan, FramePlane(2.0 * a_chan.data), b_chan
        ).values
        delta = np.abs(doubled - base)
        assert np.any(delta[12:24] > 1e-12)
        assert np.all(delta[:12] <= 1e-12) and np.all(delta[24:] <= 1e-12)


class TestRegistryIntegrity:
    def test_family_lengths(self):
        assert len(REGISTRY.get("brisque")) == 36
        assert len(REGISTRY.get("gmlog")) == 40
        assert len(REGISTRY.get("higrade_grad")) == 36

    def test_names_unique_across_families(self):
        names = (
            REGISTRY.get("brisque").names
            + REGISTRY.get("gmlog").names
            + REGISTRY.get("higrade_grad").names
            + REGISTRY.get("tlvqm_lcf").names
            + REGISTRY.get("tlvqm_hcf").names
        )
        assert len(set(names)) == len(names)
