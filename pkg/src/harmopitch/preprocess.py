"""Signal conditioning: low-pass filtering, framing and the lag search range."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError

# segments with a smaller windowed peak (about -200 dBFS) are treated as silent
SILENCE_PEAK = 1e-10


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio samples with their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ParameterError("AudioBuffer must be mono (1-D samples)")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class LagRange:
    l_min: int
    l_max: int
    H: int

    @property
    def harmonic_max(self) -> int:
        """Largest lag that still has all H harmonic lags inside the range."""
        return self.l_max // (self.H + 1)


@dataclass(frozen=True)
class FrameView:
    """A windowed, peak-normalized analysis frame.

    The samples are not copied; ``read`` applies the taper and the scale.
    """

    start_index: int
    length: int
    window: np.ndarray
    norm_scale: float

    def read(self, signal: np.ndarray) -> np.ndarray:
        seg = signal[self.start_index:self.start_index + self.length]
        return seg * self.window * self.norm_scale


def lowpass_filter(audio: AudioBuffer, cutoff: float = 1500.0, order: int = 4) -> AudioBuffer:
    """Zero-phase Butterworth low-pass (forward-backward, so no group delay)."""
    nyq = audio.sample_rate / 2
    if not 0 < cutoff < nyq:
        raise ParameterError(f"cutoff must lie in (0, {nyq}) Hz, got {cutoff}")
    if order < 1:
        raise ParameterError(f"filter order must be >= 1, got {order}")
    sos = butter(order, cutoff, btype="low", fs=audio.sample_rate, output="sos")
    x = audio.samples
    if len(x) == 0:
        return audio
    # sosfiltfilt needs a signal longer than its default padding
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    y = sosfiltfilt(sos, x, padlen=max(padlen, 0))
    return AudioBuffer(y, audio.sample_rate)


def compute_lag_range(f_min: float, f_max: float, H: int, sample_rate: int) -> LagRange:
    """Lag search range covering ``[f_min, f_max]`` plus ``H`` harmonic multiples.

    ``l_min`` is floored and ``F_s / f_min`` is ceiled so neither frequency
    limit is excluded by rounding.
    """
    if not 0 < f_min < f_max < sample_rate / 2:
        raise ParameterError(
            f"need 0 < f_min < f_max < sample_rate/2, got f_min={f_min}, f_max={f_max}, "
            f"sample_rate={sample_rate}")
    if H < 1:
        raise ParameterError(f"H must be >= 1, got {H}")
    l_min = int(math.floor(sample_rate / f_max))
    l_max = (H + 1) * int(math.ceil(sample_rate / f_min))
    if l_min < 1:
        raise ParameterError("f_max too high for this sample rate")
    return LagRange(l_min, l_max, int(H))


def window_length(window_dur: float, sample_rate: int) -> int:
    return int(round(window_dur * sample_rate))


def hanning(length: int) -> np.ndarray:
    # symmetric taper; the endpoints are zero
    return np.hanning(length)


def frame_starts(n_samples: int, frame_len: int, stride: int, lookahead: int = 0) -> np.ndarray:
    """Start indices of every frame whose extent plus ``lookahead`` fits the signal."""
    last = n_samples - frame_len - lookahead
    if last < 0:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, last + 1, stride, dtype=np.int64)


def segment_peaks(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Peak absolute value of the windowed segment starting at every sample.

    Entry ``s`` is ``max |x[s:s+N] * window|`` for all ``s`` in ``[0, len(x) - N]``.
    """
    n = len(window)
    if len(x) < n:
        return np.zeros(0)
    out = np.empty(len(x) - n + 1)
    view = sliding_window_view(np.abs(x), n)
    chunk = max(1, 2**22 // n)
    for a in range(0, len(out), chunk):
        out[a:a + chunk] = (view[a:a + chunk] * window).max(axis=1)
    return out


def norm_scales(peaks: np.ndarray) -> np.ndarray:
    """Per-segment peak-normalization factors; silent segments keep scale 1.

    Segments whose peak is at or below ``SILENCE_PEAK`` count as silent, so
    filter residue in digital silence is not blown up to full scale.
    """
    scales = np.ones_like(peaks)
    nz = peaks > SILENCE_PEAK
    scales[nz] = 1.0 / peaks[nz]
    return scales


def frame_stream(audio: AudioBuffer, window_dur: float, stride: int = 1,
                 lookahead: int = 0) -> list[FrameView]:
    """Windowed, peak-normalized frames starting every ``stride`` samples.

    A frame is emitted only if its window plus ``lookahead`` samples (the
    largest lag the caller will compare it with) lie inside the signal.
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    n = window_length(window_dur, audio.sample_rate)
    if n < 2:
        raise ParameterError("window must span at least 2 samples")
    win = hanning(n)
    starts = frame_starts(len(audio), n, stride, lookahead)
    frames = []
    for s in starts:
        peak = np.max(np.abs(audio.samples[s:s + n] * win))
        scale = 1.0 / peak if peak > SILENCE_PEAK else 1.0
        frames.append(FrameView(int(s), n, win, scale))
    return frames


def frame_energy(x: np.ndarray, starts: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Energy of each windowed (unnormalized) frame."""
    n = len(window)
    w2 = window**2
    return np.array([np.dot(x[s:s + n]**2, w2) for s in starts])
