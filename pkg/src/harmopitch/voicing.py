"""Voiced/unvoiced classification from frame energy and periodicity strength.

The two per-frame features are standardized, projected onto their first
principal component and modelled with a two-component 1-D Gaussian mixture.
The voiced-component posterior scales the decoded likelihoods.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from .errors import ParameterError

LOG_EPS = 1e-12
VAR_FLOOR = 1e-6

VOICED_POSTERIOR = "voiced_posterior"
LITERAL = "literal"


@dataclass
class PitchTrack:
    time: np.ndarray
    f0: np.ndarray
    voicing_prob: np.ndarray
    voiced: np.ndarray

    def __len__(self):
        return len(self.time)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time_s,f0_hz,voicing_prob,voiced\n")
            for t, f, p, v in zip(self.time, self.f0, self.voicing_prob, self.voiced):
                fh.write(f"{t:.6f},{f:.4f},{p:.6f},{int(bool(v))}\n")

    def to_json(self, path) -> None:
        data = {
            "time_s": [round(float(t), 6) for t in self.time],
            "f0_hz": [round(float(f), 4) for f in self.f0],
            "voicing_prob": [round(float(p), 6) for p in self.voicing_prob],
            "voiced": [bool(v) for v in self.voiced],
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)

    @classmethod
    def from_csv(cls, path) -> "PitchTrack":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3].astype(bool))


def omega_feature(values, W: int) -> float:
    """Log of the largest sum over ``W`` consecutive likelihood values."""
    values = np.asarray(values, dtype=np.float64)
    if not 1 <= W <= len(values):
        raise ParameterError(f"window W={W} must lie in [1, {len(values)}]")
    best = sliding_window_view(values, W).sum(axis=1).max()
    return float(np.log(max(best, LOG_EPS)))


def omega_features(values: np.ndarray, W: int) -> np.ndarray:
    """``omega_feature`` for every row of a frames x lags matrix."""
    values = np.atleast_2d(values)
    if not 1 <= W <= values.shape[1]:
        raise ParameterError(f"window W={W} must lie in [1, {values.shape[1]}]")
    csum = np.concatenate([np.zeros((len(values), 1)), np.cumsum(values, axis=1)], axis=1)
    best = (csum[:, W:] - csum[:, :-W]).max(axis=1)
    return np.log(np.maximum(best, LOG_EPS))


def log_energy(energy: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(energy, LOG_EPS))


def pca_project(features) -> np.ndarray:
    """Project standardized features onto their first principal component.

    ``features`` is n_frames x n_features with the energy feature in column 0.
    The sign is chosen so the projection increases with energy. Features
    with zero variance are dropped; if none remain, all projections are 0.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ParameterError("need at least 2 frames of 2-D features")
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))
    if not keep.any():
        return np.zeros(len(X))
    Z = (X[:, keep] - X[:, keep].mean(axis=0)) / std[keep]
    if Z.shape[1] == 1:
        proj = Z[:, 0]
    else:
        _, vecs = np.linalg.eigh(np.cov(Z, rowvar=False))
        proj = Z @ vecs[:, -1]
    ref = Z[:, 0]
    if np.dot(proj, ref) < 0:
        proj = -proj
    return proj


@dataclass
class BimodalGMM:
    """Two 1-D Gaussians; component 0 is the voiced one (higher mean)."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    log_likelihoods: list = field(default_factory=list)

    def component_log_densities(self, x) -> np.ndarray:
        """Weighted log densities, shape (n, 2)."""
        x = np.asarray(x, dtype=np.float64)[:, None]
        v = self.variances[None, :]
        return (np.log(self.weights)[None, :] - 0.5 * np.log(2 * np.pi * v)
                - 0.5 * (x - self.means[None, :])**2 / v)

    def log_likelihood(self, x) -> float:
        return float(logsumexp(self.component_log_densities(x), axis=1).sum())


def fit_bimodal_gmm(x, max_iters: int = 200, tol: float = 1e-8) -> BimodalGMM:
    """EM fit of a two-component 1-D Gaussian mixture, initialized by a median split."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = len(x)
    if n < 4:
        raise ParameterError(f"need at least 4 points to fit a bimodal GMM, got {n}")
    lo, hi = x[:n // 2], x[n // 2:]
    gmm = BimodalGMM(np.array([hi.mean(), lo.mean()]),
                     np.maximum([hi.var(), lo.var()], VAR_FLOOR),
                     np.array([0.5, 0.5]))
    prev = -np.inf
    for _ in range(max_iters):
        logp = gmm.component_log_densities(x)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        gmm.log_likelihoods.append(ll)
        if ll - prev < tol:
            break
        prev = ll
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0) + 1e-300
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means)**2).sum(axis=0) / nk
        gmm.means = means
        gmm.variances = np.maximum(variances, VAR_FLOOR)
        gmm.weights = np.clip(nk / n, 1e-12, None)
        gmm.weights /= gmm.weights.sum()
    if gmm.means[1] > gmm.means[0]:
        order = [1, 0]
        gmm.means, gmm.variances, gmm.weights = (gmm.means[order], gmm.variances[order],
                                                 gmm.weights[order])
    return gmm


def is_bimodal(x, gmm: BimodalGMM, energy=None, min_gap_db: float = 6.0) -> bool:
    """Whether two components explain ``x`` clearly better than one.

    Two components must beat a single Gaussian on BIC. When per-frame log
    energies (natural log) are given, the frames assigned to the two
    components must also differ in mean energy by at least ``min_gap_db``;
    standardization before PCA otherwise turns tiny level wobbles in a
    fully voiced utterance into an apparent second mode.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    var1 = max(x.var(), VAR_FLOOR)
    ll1 = float(np.sum(-0.5 * np.log(2 * np.pi * var1) - 0.5 * (x - x.mean())**2 / var1))
    bic1 = -2 * ll1 + 2 * np.log(n)
    bic2 = -2 * gmm.log_likelihood(x) + 5 * np.log(n)
    if bic2 >= bic1:
        return False
    if energy is None:
        return True
    logp = gmm.component_log_densities(x)
    voiced = logp[:, 0] >= logp[:, 1]
    if voiced.all() or not voiced.any():
        return False
    energy = np.asarray(energy, dtype=np.float64)
    gap_db = 10 * np.log10(np.e) * (energy[voiced].mean() - energy[~voiced].mean())
    return bool(gap_db >= min_gap_db)


def voicing_factor(x, gmm: BimodalGMM, orientation: str = VOICED_POSTERIOR,
                   clamp: bool = True):
    """Posterior weight of the voiced component, in (0, 1).

    ``literal`` returns the complementary (unvoiced) posterior instead.
    With ``clamp``, inputs are first limited to the interval between the two
    component means, so a frame beyond the voiced mean is never handed to a
    broader unvoiced component through its far tail. Works elementwise.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if clamp:
        x = np.clip(x, gmm.means.min(), gmm.means.max())
    logp = gmm.component_log_densities(x)
    with np.errstate(invalid="ignore"):
        # (1 + p_unvoiced / p_voiced)^-1 evaluated in log space
        v = 1.0 / (1.0 + np.exp(np.clip(logp[:, 1] - logp[:, 0], -700, 700)))
    v = np.where(np.all(np.isneginf(logp), axis=1), 0.5, v)
    if orientation == LITERAL:
        v = 1.0 - v
    elif orientation != VOICED_POSTERIOR:
        raise ParameterError(f"unknown voicing orientation {orientation!r}")
    return float(v[0]) if scalar else v


def finalize_track(rectified, factors, f0, threshold: float = 0.5, times=None) -> PitchTrack:
    """Scale likelihoods by the voicing factors and normalize to the utterance maximum."""
    phi = np.asarray(rectified, dtype=np.float64)
    v = np.asarray(factors, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    if not len(phi) == len(v) == len(f0):
        raise ParameterError("scores, factors and f0 must have equal length")
    scaled = phi * v
    top = scaled.max() if len(scaled) else 0.0
    prob = scaled / top if top > 0 else np.zeros_like(scaled)
    prob = np.clip(prob, 0.0, 1.0)
    if times is None:
        times = np.arange(len(phi), dtype=np.float64)
    return PitchTrack(np.asarray(times, dtype=np.float64), f0, prob, prob >= threshold)
