"""End-to-end pitch tracking pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import likelihood as lk
from .config import TrackerConfig
from .decode import (GeometricLagGrid, StatePath, geometric_upsample, greedy_decode,
                     path_to_f0, viterbi_decode)
from .postprocess import RectifyParams, rectify
from .preprocess import (AudioBuffer, LagRange, compute_lag_range, frame_energy, frame_starts,
                         hanning, lowpass_filter, window_length)
from .voicing import (PitchTrack, finalize_track, fit_bimodal_gmm, is_bimodal, log_energy,
                      omega_features, pca_project, voicing_factor)

# 40 dB expressed in natural-log energy units
ENERGY_FLOOR_NATS = 4 * np.log(10.0)


@dataclass
class Analysis:
    """Everything the pipeline computed for one utterance."""

    lags: LagRange
    starts: np.ndarray
    frame_len: int
    lattices: dict
    grid: GeometricLagGrid
    upsampled: np.ndarray
    path: StatePath
    scores: np.ndarray
    rectified: np.ndarray
    features: np.ndarray
    factors: np.ndarray
    track: PitchTrack


class PitchTracker:
    """Frame-synchronous pitch tracker.

    >>> tracker = PitchTracker(TrackerConfig(stride=160))
    >>> track = tracker.track(audio)        # doctest: +SKIP
    """

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()

    def track(self, audio: AudioBuffer) -> PitchTrack:
        return self.analyze(audio).track

    def analyze(self, audio: AudioBuffer) -> Analysis:
        cfg = self.config
        sr = audio.sample_rate
        lags = compute_lag_range(cfg.f_min, cfg.f_max, cfg.H, sr)
        auto = cfg.resolved(sr, lags.l_min)
        filtered = lowpass_filter(audio, cfg.lowpass_cutoff, cfg.lowpass_order)
        x = filtered.samples
        n = window_length(cfg.window_dur, sr)
        starts = frame_starts(len(x), n, cfg.stride, lags.l_max)

        stages = {}
        lat = lk.namdf_lattice(x, sr, starts, n, lags, cfg.stride)
        stages[lk.Stage.RAW_NAMDF] = lat
        lat = lk.sigmoid_lattice(lat, cfg.k)
        stages[lk.Stage.SIGMOID] = lat
        if cfg.harmonic_summation:
            weights = lk.HarmonicWeights(cfg.weights(), cfg.r, cfg.r_mode == "proportional")
            lat = lk.harmonic_lattice(lat, weights, lags)
            stages[lk.Stage.HARMONIC] = lat
        else:
            lat = lk.truncate_lattice(lat, lags)
        if cfg.temporal_accumulation:
            lat = lk.temporal_accumulation(lat, cfg.K, auto["temporal_step"])
            stages[lk.Stage.TEMPORAL] = lat

        grid = GeometricLagGrid.build(lags.l_min, lags.harmonic_max, cfg.U)
        up = geometric_upsample(lat.values, lat.lag_offset, grid)
        if cfg.viterbi:
            path = viterbi_decode(up, auto["viterbi_max_step"], cfg.viterbi_cost_mode)
        else:
            path = greedy_decode(up)
        f0 = path_to_f0(path, grid, sr)
        scores = path.scores
        if cfg.rectification and len(scores):
            rect = rectify(scores, RectifyParams(auto["S"], auto["J"], cfg.alpha))
        else:
            rect = scores.copy()

        win = hanning(n)
        energy = log_energy(frame_energy(x, starts, win))
        omega = (omega_features(lat.values, min(auto["W"], lat.values.shape[1]))
                 if len(starts) else np.zeros(0))
        features = np.column_stack([energy, omega]) if len(starts) else np.zeros((0, 2))
        factors = self._voicing_factors(features)

        times = (starts + n / 2) / sr
        track = finalize_track(rect, factors, f0, cfg.voicing_threshold, times)
        return Analysis(lags, starts, n, stages, grid, up, path, scores, rect, features,
                        factors, track)

    def _voicing_factors(self, features: np.ndarray) -> np.ndarray:
        cfg = self.config
        n = len(features)
        if not cfg.voicing:
            return np.ones(n)
        if n < 4:
            # too few frames for a mixture: keep frames within 40 dB of the loudest
            energy = features[:, 0]
            return (energy >= energy.max() - ENERGY_FLOOR_NATS).astype(float) if n else np.ones(0)
        proj = pca_project(features)
        gmm = fit_bimodal_gmm(proj, cfg.gmm_max_iters, cfg.gmm_tol)
        if not is_bimodal(proj, gmm, features[:, 0]):
            # one population only: leave the voicing decision to the likelihoods
            return np.full(n, 0.5)
        return voicing_factor(proj, gmm, cfg.voicing_orientation)


def track(audio: AudioBuffer, config: TrackerConfig | None = None) -> PitchTrack:
    return PitchTracker(config).track(audio)
