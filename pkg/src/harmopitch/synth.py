"""Synthetic voiced test signals with exact reference pitch, and noise generators.

Every generator returns the waveform together with a ``ReferenceTrack`` on
the 10 ms evaluation grid.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError
from .evaluation import REF_INTERVAL, ReferenceTrack
from .preprocess import AudioBuffer

KINDS = ("pulse_train", "sawtooth", "chirp", "tone_burst")

# first three formants of an open vowel: (centre Hz, bandwidth Hz)
VOWEL_FORMANTS = ((730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0))
PEAK = 0.9


def _formant_filter(x: np.ndarray, sample_rate: int) -> np.ndarray:
    for fc, bw in VOWEL_FORMANTS:
        if fc >= sample_rate / 2:
            continue
        r = np.exp(-np.pi * bw / sample_rate)
        theta = 2 * np.pi * fc / sample_rate
        a = [1.0, -2 * r * np.cos(theta), r * r]
        x = lfilter([1.0 - r], a, x)
    return x


def _harmonic_sum(f0: np.ndarray, sample_rate: int, amplitude) -> np.ndarray:
    """Sum of harmonics of the instantaneous f0 contour, band-limited below Nyquist."""
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    n_harm = int(0.45 * sample_rate / f0.max())
    out = np.zeros(len(f0))
    for h in range(1, n_harm + 1):
        out += amplitude(h) * np.cos(h * phase)
    return out


def _normalize(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    return x * (PEAK / peak) if peak > 0 else x


def _gate(duration: float, sample_rate: int, period: float, duty: float, ramp: float = 0.005):
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    on = (t % period) < duty * period
    g = on.astype(np.float64)
    n_ramp = max(1, int(ramp * sample_rate))
    kernel = np.hanning(2 * n_ramp + 1)
    return np.convolve(g, kernel / kernel.sum(), mode="same"), on


def _drift(t: np.ndarray, depth: float, seed: int) -> np.ndarray:
    """Slow zero-mean pitch wander with unit RMS scaled to ``depth``.

    A sum of sinusoids between 3 and 15 Hz with seeded phases, standing in
    for the natural micro-variation of sustained vowels.
    """
    if depth == 0:
        return np.zeros(len(t))
    rng = np.random.default_rng([seed, 7919])
    freqs = np.array([3.1, 5.3, 7.9, 11.3, 14.7])
    phases = rng.uniform(0, 2 * np.pi, len(freqs))
    wander = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0)
    return depth * wander / np.sqrt(len(freqs) / 2)


def reference_grid(duration: float) -> np.ndarray:
    n = int(np.floor(duration / REF_INTERVAL + 1e-9))
    return np.arange(n) * REF_INTERVAL


def synthesize(kind: str, f0_start: float, f0_end: float | None = None, duration: float = 3.0,
               sample_rate: int = 16000, snr_db: float | None = None, seed: int = 0,
               burst_period: float = 0.4, duty: float = 0.5, jitter: float = 0.005):
    """Generate a test signal and its ground-truth pitch track.

    ``f0_end`` is only used by ``chirp`` (linear sweep). ``tone_burst`` gates
    a pulse train on and off with the given period and duty cycle.
    ``jitter`` is the RMS relative depth of a slow pitch wander; 0 gives an
    exactly periodic signal, for which every multiple of the period is an
    equally good candidate.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown signal kind {kind!r}; choose from {KINDS}")
    if f0_start <= 0 or duration <= 0:
        raise ParameterError("f0 and duration must be positive")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    if kind == "chirp":
        f1 = f0_start if f0_end is None else f0_end
        f0 = f0_start + (f1 - f0_start) * t / duration
    else:
        f0 = np.full(n, float(f0_start))
    f0 = f0 * (1.0 + _drift(t, jitter, seed))

    if kind == "sawtooth":
        x = _harmonic_sum(f0, sample_rate, lambda h: 1.0 / h)
    else:
        x = _formant_filter(_harmonic_sum(f0, sample_rate, lambda h: 1.0), sample_rate)

    grid = reference_grid(duration)
    ref_f0 = np.interp(grid, t, f0)
    if kind == "tone_burst":
        gate, on = _gate(duration, sample_rate, burst_period, duty)
        x = x * gate
        ref_f0 = np.where(on[np.minimum(np.round(grid * sample_rate).astype(int), n - 1)],
                          ref_f0, 0.0)
    x = _normalize(x)
    if snr_db is not None and np.isfinite(snr_db):
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(n)
        p_sig = np.mean(x**2)
        x = x + noise * np.sqrt(p_sig / (np.mean(noise**2) * 10 ** (snr_db / 10)))
    return AudioBuffer(x, sample_rate), ReferenceTrack(grid, ref_f0)


def white_noise(n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def _shaped_noise(n: int, seed: int, exponent: float) -> np.ndarray:
    spec = np.fft.rfft(np.random.default_rng(seed).standard_normal(n))
    freqs = np.arange(len(spec), dtype=np.float64)
    freqs[0] = 1.0
    spec *= freqs ** (-exponent / 2)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.std(x)


def pink_noise(n: int, seed: int = 0) -> np.ndarray:
    """Noise with a 1/f power spectrum."""
    return _shaped_noise(n, seed, 1.0)


def brown_noise(n: int, seed: int = 0) -> np.ndarray:
    """Noise with a 1/f^2 power spectrum."""
    return _shaped_noise(n, seed, 2.0)


NOISE_GENERATORS = {"white": white_noise, "pink": pink_noise, "brown": brown_noise}


def make_noise(kind: str, n: int, sample_rate: int, seed: int = 0) -> AudioBuffer:
    if kind not in NOISE_GENERATORS:
        raise ParameterError(f"unknown noise kind {kind!r}; choose from {sorted(NOISE_GENERATORS)}")
    return AudioBuffer(NOISE_GENERATORS[kind](n, seed), sample_rate)


SUITE_SIGNALS = (("pulse_train", 160.0), ("pulse_train", 250.0), ("sawtooth", 160.0),
                 ("sawtooth", 250.0), ("chirp", 160.0), ("chirp", 250.0))
SUITE_SNRS = (0.0, 5.0, 10.0)


def noisy_suite(duration: float = 1.0, sample_rate: int = 16000, seed: int = 0):
    """Utterances and noises of the standard noisy synthetic test suite.

    Returns ``(utterances, noises)`` in the form ``evaluate_corpus`` takes:
    pulse trains, sawtooths and 30% upward chirps at 160 and 250 Hz, and
    white, pink and brown noise. Score it at ``SUITE_SNRS``.
    """
    utterances = []
    for i, (kind, f0) in enumerate(SUITE_SIGNALS):
        f_end = 1.3 * f0 if kind == "chirp" else None
        audio, ref = synthesize(kind, f0, f_end, duration, sample_rate, seed=seed + i)
        utterances.append((f"{kind}_{f0:g}", audio, ref))
    n = int(round(duration * sample_rate))
    noises = [(name, make_noise(name, n, sample_rate, seed=seed + 100 + j))
              for j, name in enumerate(NOISE_GENERATORS)]
    return utterances, noises
