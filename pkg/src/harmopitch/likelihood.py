"""Pitch-state likelihoods over the lag axis.

Each analysis frame is turned into a vector indexed by integer lag. The
stages are applied in order and each result is tagged with its stage so any
of them can be skipped for ablation runs:

    raw_namdf -> sigmoid -> harmonic -> temporal
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import ParameterError
from .preprocess import (SILENCE_PEAK, FrameView, LagRange, hanning, norm_scales,
                         segment_peaks)

NORM_EPS = 1e-12


class Stage(str, Enum):
    RAW_NAMDF = "raw_namdf"
    SIGMOID = "sigmoid"
    HARMONIC = "harmonic"
    TEMPORAL = "temporal"


@dataclass
class LikelihoodColumn:
    values: np.ndarray
    lag_offset: int
    stage: Stage

    @property
    def lags(self) -> np.ndarray:
        return self.lag_offset + np.arange(len(self.values))

    def at(self, lag: int) -> float:
        return float(self.values[lag - self.lag_offset])


@dataclass
class LikelihoodLattice:
    """Likelihood columns for a whole utterance, stored as a frames x lags matrix."""

    values: np.ndarray
    lag_offset: int
    stage: Stage
    frame_stride: int
    sample_rate: int
    # frames whose own analysis window is digital silence
    silent: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.silent is None:
            self.silent = np.zeros(len(self.values), dtype=bool)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def lags(self) -> np.ndarray:
        return self.lag_offset + np.arange(self.values.shape[1])

    @property
    def columns(self) -> list[LikelihoodColumn]:
        return [LikelihoodColumn(row, self.lag_offset, self.stage) for row in self.values]

    def replace(self, values: np.ndarray, stage: Stage, lag_offset: int | None = None):
        return LikelihoodLattice(values, self.lag_offset if lag_offset is None else lag_offset,
                                 stage, self.frame_stride, self.sample_rate, self.silent)


@dataclass(frozen=True)
class HarmonicWeights:
    """Weights for harmonics 2..H+1 and the lag tolerance around each multiple.

    With ``proportional=True`` the tolerance at harmonic lag ``h*l`` is
    ``max(r, round(0.01 * h * l))``; otherwise it is the fixed ``r``.
    """

    w: tuple
    r: int = 1
    proportional: bool = True

    def __post_init__(self):
        if any(x < 0 for x in self.w):
            raise ParameterError("harmonic weights must be non-negative")
        if self.r < 0:
            raise ParameterError("harmonic tolerance r must be >= 0")

    @classmethod
    def default(cls, H: int, r: int = 1, proportional: bool = True) -> "HarmonicWeights":
        return cls(tuple(1.0 / h for h in range(2, H + 2)), r, proportional)

    def tolerance(self, harmonic_lag: np.ndarray) -> np.ndarray:
        harmonic_lag = np.asarray(harmonic_lag)
        if not self.proportional:
            return np.full(harmonic_lag.shape, self.r, dtype=np.int64)
        return np.maximum(self.r, np.round(0.01 * harmonic_lag).astype(np.int64))


@njit(cache=True, fastmath=True)
def _namdf_kernel(x, starts, win, scales, norms2, l_min, l_max, out, bad):
    n = win.shape[0]
    ref = np.empty(n)
    for row in range(starts.shape[0]):
        s = starts[row]
        for j in range(n):
            ref[j] = x[s + j] * win[j] * scales[s]
        for lag in range(l_min, l_max + 1):
            t = s + lag
            c = scales[t]
            acc = 0.0
            for j in range(n):
                acc += abs(x[t + j] * win[j] * c - ref[j])
            col = lag - l_min
            if norms2[s] < NORM_EPS or norms2[t] < NORM_EPS:
                bad[row, col] = True
                out[row, col] = acc
            else:
                out[row, col] = acc / np.sqrt(np.sqrt(norms2[s] * norms2[t]))


def _namdf_rows(x, starts, win, scales, norms2, lags: LagRange):
    """NAMDF for every frame start against every lag in ``lags``.

    Returns the matrix plus a mask of entries where a zero-energy segment
    made the denominator vanish.
    """
    n_lags = lags.l_max - lags.l_min + 1
    out = np.empty((len(starts), n_lags))
    bad = np.zeros((len(starts), n_lags), dtype=np.bool_)
    _namdf_kernel(x, np.asarray(starts, dtype=np.int64), win, scales, norms2,
                  lags.l_min, lags.l_max, out, bad)
    return out, bad


def _segment_stats(x: np.ndarray, win: np.ndarray):
    peaks = segment_peaks(x, win)
    scales = norm_scales(peaks)
    # squared 2-norm of every windowed, normalized segment
    norms2 = np.correlate(x * x, win * win, mode="valid") * scales**2
    norms2[peaks <= SILENCE_PEAK] = 0.0
    return scales, norms2


def _apply_guard(values: np.ndarray, bad: np.ndarray) -> None:
    """Replace undefined entries by their column maximum (maximal dissimilarity)."""
    for row in np.flatnonzero(bad.any(axis=1)):
        good = ~bad[row]
        values[row, bad[row]] = values[row, good].max() if good.any() else 0.0


def namdf(signal, frame: FrameView, lags: LagRange) -> LikelihoodColumn:
    """NAMDF of one frame against the frames ``l`` samples later, for every lag in range.

    ``signal`` is the filtered sample array (or an ``AudioBuffer``); the later
    frames are windowed and normalized exactly as ``frame`` is.
    """
    x = np.asarray(getattr(signal, "samples", signal), dtype=np.float64)
    if frame.start_index + frame.length + lags.l_max > len(x):
        raise ParameterError("frame plus l_max lookahead exceeds the signal")
    win = frame.window
    lo, hi = frame.start_index, frame.start_index + lags.l_max + frame.length
    scales, norms2 = _segment_stats(x[lo:hi], win)
    values, bad = _namdf_rows(x[lo:hi], np.array([0]), win, scales, norms2, lags)
    _apply_guard(values, bad)
    return LikelihoodColumn(values[0], lags.l_min, Stage.RAW_NAMDF)


def namdf_lattice(x: np.ndarray, sample_rate: int, starts: np.ndarray, frame_len: int,
                  lags: LagRange, stride: int) -> LikelihoodLattice:
    """NAMDF columns for all frames at ``starts`` in one pass over the signal."""
    x = np.asarray(x, dtype=np.float64)
    win = hanning(frame_len)
    if len(starts) and starts[-1] + frame_len + lags.l_max > len(x):
        raise ParameterError("frame plus l_max lookahead exceeds the signal")
    if len(starts) == 0:
        return LikelihoodLattice(np.zeros((0, lags.l_max - lags.l_min + 1)), lags.l_min,
                                 Stage.RAW_NAMDF, stride, sample_rate, np.zeros(0, dtype=bool))
    scales, norms2 = _segment_stats(x, win)
    values, bad = _namdf_rows(x, starts, win, scales, norms2, lags)
    silent = norms2[starts] < NORM_EPS
    _apply_guard(values, bad)
    return LikelihoodLattice(values, lags.l_min, Stage.RAW_NAMDF, stride, sample_rate, silent)


def _sigmoid_rows(values: np.ndarray, k: float) -> np.ndarray:
    p10, p90 = np.percentile(values, [10, 90], axis=-1, keepdims=True)
    spread = p90 - p10
    center = (p90 + p10) / 2
    flat = spread <= 0
    z = k * (values - center) / np.where(flat, 1.0, spread)
    return np.where(flat, 0.5, expit(z))


def sigmoid_transform(col: LikelihoodColumn, k: float = -8.0) -> LikelihoodColumn:
    """Map NAMDF values to (0, 1) with a logistic anchored at the 10th/90th percentiles.

    A negative ``k`` makes small NAMDF (strong periodicity) map to high likelihood.
    """
    if len(col.values) == 0:
        raise ParameterError("cannot transform an empty column")
    return LikelihoodColumn(_sigmoid_rows(col.values, k), col.lag_offset, Stage.SIGMOID)


def sigmoid_lattice(lat: LikelihoodLattice, k: float = -8.0) -> LikelihoodLattice:
    if lat.n_frames == 0:
        return lat.replace(lat.values, Stage.SIGMOID)
    out = _sigmoid_rows(lat.values, k)
    # no periodicity evidence in digital silence
    out[lat.silent] = 0.0
    return lat.replace(out, Stage.SIGMOID)


def _harmonic_index(lags: LagRange, weights: HarmonicWeights):
    """Per-harmonic gather indices (into the full column) for the max over +/- r."""
    base = np.arange(lags.l_min, lags.harmonic_max + 1)
    tables = []
    for h in range(2, lags.H + 2):
        centre = h * base
        r = weights.tolerance(centre)
        width = int(r.max())
        offsets = np.arange(-width, width + 1)
        idx = centre[:, None] + offsets[None, :]
        # entries outside this lag's own tolerance collapse onto the centre
        idx = np.where(np.abs(offsets)[None, :] <= r[:, None], idx, centre[:, None])
        idx = np.clip(idx, lags.l_min, lags.l_max) - lags.l_min
        tables.append(idx)
    return base, tables


def _harmonic_rows(values: np.ndarray, weights: HarmonicWeights, lags: LagRange):
    if len(weights.w) != lags.H:
        raise ParameterError(f"expected {lags.H} harmonic weights, got {len(weights.w)}")
    if values.shape[-1] != lags.l_max - lags.l_min + 1:
        raise ParameterError("column does not cover [l_min, l_max]")
    base, tables = _harmonic_index(lags, weights)
    out = values[..., base - lags.l_min].copy()
    for w, idx in zip(weights.w, tables):
        if w:
            out += w * values[..., idx].max(axis=-1)
    return out


def harmonic_summation(col: LikelihoodColumn, weights: HarmonicWeights,
                       lags: LagRange) -> LikelihoodColumn:
    """Add weighted evidence from lags ``h*l`` (h = 2..H+1) to each lag ``l``.

    Only lags whose H multiples all fall inside the range are kept, so the
    result spans ``[l_min, l_max // (H+1)]``.
    """
    return LikelihoodColumn(_harmonic_rows(col.values, weights, lags), lags.l_min, Stage.HARMONIC)


def harmonic_lattice(lat: LikelihoodLattice, weights: HarmonicWeights,
                     lags: LagRange) -> LikelihoodLattice:
    return lat.replace(_harmonic_rows(lat.values, weights, lags), Stage.HARMONIC)


def truncate_lattice(lat: LikelihoodLattice, lags: LagRange) -> LikelihoodLattice:
    """Restrict to the pitch range without summing harmonics (ablation path)."""
    n = lags.harmonic_max - lags.l_min + 1
    return lat.replace(lat.values[:, :n].copy(), lat.stage)


def temporal_accumulation(lat: LikelihoodLattice, K: int = 2, step: int = 1) -> LikelihoodLattice:
    """Sum each column with its neighbours ``i + k*step`` for ``k`` in ``[-K, K]``.

    Neighbours beyond either end are replaced by the nearest boundary column.
    """
    if K < 0 or step < 1:
        raise ParameterError(f"need K >= 0 and step >= 1, got K={K}, step={step}")
    n = lat.n_frames
    out = np.zeros_like(lat.values)
    if n:
        idx = np.arange(n)
        for k in range(-K, K + 1):
            out += lat.values[np.clip(idx + k * step, 0, n - 1)]
    return lat.replace(out, Stage.TEMPORAL)


def save_lattice(lat: LikelihoodLattice, path) -> None:
    """Write a lattice as CSV (``#`` header lines) or ``.npz``."""
    path = str(path)
    meta = dict(sample_rate=lat.sample_rate, stride=lat.frame_stride,
                lag_offset=lat.lag_offset, stage=lat.stage.value)
    if path.endswith(".npz"):
        np.savez(path, values=lat.values, **meta)
        return
    header = "\n".join(f"{k}={v}" for k, v in meta.items())
    np.savetxt(path, lat.values, delimiter=",", header=header, comments="# ", fmt="%.10g")


def load_lattice(path) -> LikelihoodLattice:
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            return LikelihoodLattice(z["values"], int(z["lag_offset"]), Stage(str(z["stage"])),
                                     int(z["stride"]), int(z["sample_rate"]))
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return LikelihoodLattice(values, int(meta["lag_offset"]), Stage(meta["stage"]),
                             int(meta["stride"]), int(meta["sample_rate"]))
