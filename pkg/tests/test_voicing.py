import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from harmopitch.errors import ParameterError
from harmopitch.voicing import (LITERAL, BimodalGMM, PitchTrack, finalize_track, fit_bimodal_gmm,
                                is_bimodal, omega_feature, omega_features, pca_project,
                                voicing_factor)


class TestOmega:
    def test_constant(self):
        assert omega_feature(np.full(10, 0.3), 4) == pytest.approx(math.log(1.2))

    def test_enumerated(self):
        assert omega_feature([0, 0, 5, 5, 0], 2) == pytest.approx(math.log(10))

    def test_full_window(self):
        v = np.random.default_rng(0).random(12)
        assert omega_feature(v, 12) == pytest.approx(math.log(v.sum()))

    def test_all_zero_guard(self):
        assert omega_feature(np.zeros(5), 2) == pytest.approx(math.log(1e-12))

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.data())
    def test_matches_oracle(self, values, data):
        W = data.draw(st.integers(1, len(values)))
        want = max(oracles.max_window_sum(values, W), 1e-12)
        assert omega_feature(values, W) == pytest.approx(math.log(want), abs=1e-9)
        assert omega_features(np.array([values]), W)[0] == pytest.approx(math.log(want), abs=1e-9)

    @pytest.mark.parametrize("W", [0, 6])
    def test_bad_window(self, W):
        with pytest.raises(ParameterError):
            omega_feature(np.ones(5), W)


class TestPCA:
    def test_perfect_correlation(self):
        e = np.random.default_rng(1).standard_normal(50)
        X = np.column_stack([e, 3 * e + 2])
        z = (e - e.mean()) / e.std()
        np.testing.assert_allclose(pca_project(X), np.sqrt(2) * z, atol=1e-9)

    def test_two_clusters_diagonal(self):
        X = np.array([[-1.0, -1.0]] * 10 + [[1.0, 1.0]] * 10)
        p = pca_project(X)
        # standardized coordinates are +/-1, projection is +/-sqrt(2)
        np.testing.assert_allclose(p[:10], -math.sqrt(2))
        np.testing.assert_allclose(p[10:], math.sqrt(2))
        assert p[10] - p[0] == pytest.approx(2 * math.sqrt(2))

    def test_constant_features(self):
        np.testing.assert_array_equal(pca_project(np.ones((6, 2))), 0.0)

    def test_degenerate_dimension_dropped(self):
        e = np.arange(6.0)
        p = pca_project(np.column_stack([e, np.full(6, 4.0)]))
        np.testing.assert_allclose(p, (e - e.mean()) / e.std())

    def test_sign_follows_energy(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal(40)
        X = np.column_stack([e, -e + 0.1 * rng.standard_normal(40)])
        assert np.corrcoef(pca_project(X), e)[0, 1] > 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.01, 100), st.floats(-50, 50),
           st.floats(0.01, 100), st.floats(-50, 50))
    def test_affine_invariance(self, seed, a, b, c, d):
        X = np.random.default_rng(seed).standard_normal((30, 2)) @ np.array([[1, 0.6], [0, 1]])
        Y = np.column_stack([a * X[:, 0] + b, c * X[:, 1] + d])
        np.testing.assert_array_equal(np.argsort(pca_project(X)), np.argsort(pca_project(Y)))

    def test_too_few(self):
        with pytest.raises(ParameterError):
            pca_project(np.ones((1, 2)))


class TestGMM:
    def sample(self, seed=0, n=2000):
        rng = np.random.default_rng(seed)
        comp = rng.random(n) < 0.5
        return np.where(comp, rng.normal(-3, 1, n), rng.normal(3, 1, n))

    def test_recovers_means(self):
        gmm = fit_bimodal_gmm(self.sample())
        assert gmm.means[0] == pytest.approx(3, abs=0.2)
        assert gmm.means[1] == pytest.approx(-3, abs=0.2)

    def test_em_monotone(self):
        for seed in range(5):
            ll = np.array(fit_bimodal_gmm(self.sample(seed, 500)).log_likelihoods)
            assert np.all(np.diff(ll) >= -1e-9)

    def test_identical_points(self):
        x = np.full(30, 1.5)
        gmm = fit_bimodal_gmm(x)
        assert np.all(gmm.variances >= 1e-6)
        assert not is_bimodal(x, gmm)
        assert voicing_factor(1.5, gmm) == pytest.approx(0.5, abs=1e-6)

    def test_too_few_points(self):
        with pytest.raises(ParameterError):
            fit_bimodal_gmm([1.0, 2.0, 3.0])

    def test_weights_sum_to_one(self):
        gmm = fit_bimodal_gmm(self.sample(2, 300))
        assert gmm.weights.sum() == pytest.approx(1.0)
        assert np.all(gmm.variances > 0)

    def test_unimodal_rejected(self):
        x = np.random.default_rng(4).standard_normal(400)
        assert not is_bimodal(x, fit_bimodal_gmm(x))

    def test_bimodal_accepted(self):
        x = self.sample(5, 400)
        assert is_bimodal(x, fit_bimodal_gmm(x))

    def test_energy_gap_required(self):
        x = self.sample(6, 400)
        gmm = fit_bimodal_gmm(x)
        flat = np.full(400, -3.0) + 0.01 * x  # sub-dB energy differences
        assert not is_bimodal(x, gmm, energy=flat)
        loud = np.where(x > 0, 0.0, -5.0)  # about 22 dB apart
        assert is_bimodal(x, gmm, energy=loud)


class TestVoicingFactor:
    gmm = BimodalGMM(np.array([3.0, -3.0]), np.array([1.0, 1.0]), np.array([0.5, 0.5]))

    def test_at_voiced_mean(self):
        p1 = oracles.gaussian_pdf(3, 3, 1)
        p2 = oracles.gaussian_pdf(3, -3, 1)
        v = voicing_factor(3.0, self.gmm, clamp=False)
        assert v == pytest.approx(1 / (1 + p2 / p1)) and v > 0.95

    def test_midpoint(self):
        assert voicing_factor(0.0, self.gmm) == pytest.approx(0.5)

    def test_at_unvoiced_mean(self):
        assert voicing_factor(-3.0, self.gmm) < 0.05

    @given(st.floats(-10, 10))
    def test_swapped_components_sum_to_one(self, x):
        swapped = BimodalGMM(self.gmm.means[::-1].copy(), self.gmm.variances[::-1].copy(),
                             self.gmm.weights[::-1].copy())
        a = voicing_factor(x, self.gmm, clamp=False)
        b = voicing_factor(x, swapped, clamp=False)
        assert a + b == pytest.approx(1.0)

    @given(st.floats(-6, 6))
    def test_open_interval(self, x):
        v = voicing_factor(x, self.gmm)
        assert 0 < v < 1

    def test_literal_orientation(self):
        assert voicing_factor(2.0, self.gmm, LITERAL) == pytest.approx(
            1 - voicing_factor(2.0, self.gmm))

    def test_clamp_protects_far_voiced_tail(self):
        # broad unvoiced component would win far beyond the tight voiced mean
        gmm = BimodalGMM(np.array([2.0, -2.0]), np.array([0.1, 4.0]), np.array([0.5, 0.5]))
        assert voicing_factor(6.0, gmm, clamp=False) < 0.5
        assert voicing_factor(6.0, gmm) > 0.95

    def test_vectorized(self):
        xs = np.array([-3.0, 0.0, 3.0])
        np.testing.assert_allclose(voicing_factor(xs, self.gmm),
                                   [voicing_factor(x, self.gmm) for x in xs])

    def test_unknown_orientation(self):
        with pytest.raises(ParameterError):
            voicing_factor(0.0, self.gmm, "sideways")


class TestFinalize:
    def test_all_zero(self):
        tr = finalize_track(np.zeros(4), np.ones(4), np.full(4, 100.0))
        np.testing.assert_array_equal(tr.voicing_prob, 0)
        assert not tr.voiced.any()

    def test_single_frame(self):
        tr = finalize_track([0.3], [0.8], [120.0])
        assert tr.voicing_prob[0] == 1.0 and tr.voiced[0]

    def test_arithmetic(self):
        tr = finalize_track([2, 1], [1, 0.5], [100.0, 100.0])
        np.testing.assert_allclose(tr.voicing_prob, [1, 0.25])
        np.testing.assert_array_equal(tr.voiced, [True, False])

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=30))
    def test_max_is_one(self, scores):
        tr = finalize_track(scores, np.full(len(scores), 0.7), np.full(len(scores), 150.0))
        assert np.all((tr.voicing_prob >= 0) & (tr.voicing_prob <= 1))
        if max(scores) > 0:
            assert tr.voicing_prob.max() == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            finalize_track([1, 2], [1], [100, 100])


class TestPitchTrackIO:
    def track(self):
        return PitchTrack(np.array([0.01, 0.02]), np.array([100.0, 101.5]),
                          np.array([0.9, 0.2]), np.array([True, False]))

    def test_csv(self, tmp_path):
        self.track().to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "time_s,f0_hz,voicing_prob,voiced"
        assert lines[1] == "0.010000,100.0000,0.900000,1"
        back = PitchTrack.from_csv(tmp_path / "t.csv")
        np.testing.assert_allclose(back.f0, [100.0, 101.5])
        np.testing.assert_array_equal(back.voiced, [True, False])

    def test_json(self, tmp_path):
        import json
        self.track().to_json(tmp_path / "t.json")
        data = json.loads((tmp_path / "t.json").read_text())
        assert data["voiced"] == [True, False] and data["f0_hz"] == [100.0, 101.5]
