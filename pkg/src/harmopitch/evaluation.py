"""Degradation protocol (additive noise, reverberation) and GPE / VDE scoring."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import ParameterError
from .preprocess import AudioBuffer

log = logging.getLogger(__name__)

REF_INTERVAL = 0.01
GROSS_ERROR = 0.05
ACTIVE_DB = -40.0
REF_SUFFIXES = (".f0", ".txt", ".csv", ".ref", ".pitch")


@dataclass
class ReferenceTrack:
    """Ground-truth pitch on a uniform grid; ``f0 == 0`` marks unvoiced frames."""

    time: np.ndarray
    f0: np.ndarray
    interval: float = REF_INTERVAL

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=np.float64)
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        if self.time.shape != self.f0.shape:
            raise ParameterError("reference time and f0 differ in length")
        if np.any(self.f0 < 0):
            raise ParameterError("reference f0 must be >= 0")

    def __len__(self):
        return len(self.f0)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0

    def save(self, path) -> None:
        np.savetxt(path, np.column_stack([self.time, self.f0]), fmt="%.6f")


def read_reference(path, interval: float = REF_INTERVAL) -> ReferenceTrack:
    """Read ``time f0`` rows, or one f0 value per ``interval`` seconds."""
    data = np.loadtxt(path, delimiter="," if str(path).endswith(".csv") else None, ndmin=2)
    if data.shape[1] >= 2:
        time, f0 = data[:, 0], data[:, 1]
        if len(time) > 1:
            interval = float(np.median(np.diff(time)))
        return ReferenceTrack(time, f0, interval)
    f0 = data[:, 0]
    return ReferenceTrack(np.arange(len(f0)) * interval, f0, interval)


@dataclass
class EvalReport:
    gpe: float = math.nan
    vde: float = math.nan
    n_voiced_ref: int = 0
    n_gross_errors: int = 0
    n_v_misclassified: int = 0
    n_uv_misclassified: int = 0
    n_total: int = 0

    def merge(self, other: "EvalReport") -> "EvalReport":
        """Combine a GPE-only and a VDE-only partial report."""
        a, b = asdict(self), asdict(other)
        for key, val in b.items():
            if key in ("gpe", "vde"):
                if not math.isnan(val):
                    a[key] = val
            elif val:
                a[key] = val
        return EvalReport(**a)

    def to_dict(self) -> dict:
        return asdict(self)


def align(est, ref: ReferenceTrack) -> np.ndarray:
    """Index of the estimate frame nearest in time to each reference frame."""
    t = np.asarray(est.time, dtype=np.float64)
    if len(t) == 0:
        raise ParameterError("cannot align an empty estimate track")
    pos = np.searchsorted(t, ref.time)
    lo = np.clip(pos - 1, 0, len(t) - 1)
    hi = np.clip(pos, 0, len(t) - 1)
    return np.where(np.abs(t[hi] - ref.time) < np.abs(t[lo] - ref.time), hi, lo)


def compute_gpe(est, ref: ReferenceTrack) -> EvalReport:
    """Fraction of reference-voiced frames whose estimate is more than 5% off.

    The estimate's own voicing decision is ignored.
    """
    idx = align(est, ref)
    f0 = np.asarray(est.f0, dtype=np.float64)[idx]
    voiced = ref.voiced
    n_v = int(voiced.sum())
    rel = np.abs(f0[voiced] - ref.f0[voiced]) / ref.f0[voiced]
    n_err = int(np.sum(rel > GROSS_ERROR))
    gpe = n_err / n_v if n_v else math.nan
    return EvalReport(gpe=gpe, n_voiced_ref=n_v, n_gross_errors=n_err)


def compute_vde(est, ref: ReferenceTrack) -> EvalReport:
    """Fraction of reference frames whose voicing decision disagrees."""
    idx = align(est, ref)
    est_v = np.asarray(est.voiced, dtype=bool)[idx]
    ref_v = ref.voiced
    n_ve = int(np.sum(est_v & ~ref_v))
    n_uve = int(np.sum(~est_v & ref_v))
    n = len(ref)
    vde = (n_ve + n_uve) / n if n else math.nan
    return EvalReport(vde=vde, n_v_misclassified=n_ve, n_uv_misclassified=n_uve, n_total=n)


def evaluate(est, ref: ReferenceTrack) -> EvalReport:
    return compute_gpe(est, ref).merge(compute_vde(est, ref))


# -- degradation --------------------------------------------------------

def _active_mask(x: np.ndarray, active_db: float = ACTIVE_DB) -> np.ndarray:
    power = x * x
    peak = power.max() if len(power) else 0.0
    mask = power >= peak * 10 ** (active_db / 10)
    return mask if mask.any() else np.ones(len(x), dtype=bool)


def measure_snr(speech: np.ndarray, noise: np.ndarray, active_only: bool = True) -> float:
    """SNR in dB with both powers taken over the speech-active samples."""
    mask = _active_mask(speech) if active_only else np.ones(len(speech), dtype=bool)
    return 10 * np.log10(np.mean(speech[mask]**2) / np.mean(noise[mask]**2))


def mix_noise_at_snr(speech: AudioBuffer, noise: AudioBuffer, snr_db: float,
                     active_only: bool = True, loop: bool = True,
                     offset: int = 0) -> AudioBuffer:
    """Add ``noise`` scaled to the requested SNR; ``snr_db=inf`` returns ``speech``.

    Powers are measured where the speech is within 40 dB of its peak unless
    ``active_only`` is False. Short noise is tiled when ``loop`` is set.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ParameterError("speech and noise sample rates differ")
    if math.isinf(snr_db) and snr_db > 0:
        return speech
    n = len(speech)
    seg = _noise_segment(noise.samples, n, loop, offset)
    if not np.any(seg):
        raise ParameterError("noise is silent")
    x = speech.samples
    mask = _active_mask(x) if active_only else np.ones(n, dtype=bool)
    p_speech = np.mean(x[mask]**2)
    p_noise = np.mean(seg[mask]**2)
    if p_noise == 0:
        raise ParameterError("noise is silent over the speech-active region")
    gain = np.sqrt(p_speech / (p_noise * 10 ** (snr_db / 10)))
    return AudioBuffer(x + gain * seg, speech.sample_rate)


def _noise_segment(noise: np.ndarray, n: int, loop: bool, offset: int = 0) -> np.ndarray:
    if len(noise) == 0:
        raise ParameterError("noise is empty")
    if len(noise) < n + offset:
        if not loop:
            raise ParameterError(f"noise has {len(noise)} samples, need {n + offset}")
        noise = np.resize(noise, n + offset)
    return noise[offset:offset + n]


def convolve_rir(speech: AudioBuffer, rir: AudioBuffer, renormalize: bool = True) -> AudioBuffer:
    """Full linear convolution with a room impulse response.

    The output has ``len(speech) + len(rir) - 1`` samples and, when
    ``renormalize`` is set, the same peak level as the input.
    """
    if speech.sample_rate != rir.sample_rate:
        raise ParameterError("speech and RIR sample rates differ")
    if len(rir) == 0:
        raise ParameterError("RIR is empty")
    h = rir.samples
    if np.count_nonzero(h) == 1:
        # pure gain/delay kernel: avoid FFT round-off
        k = int(np.flatnonzero(h)[0])
        y = np.zeros(len(speech) + len(h) - 1)
        y[k:k + len(speech)] = speech.samples * h[k]
    else:
        y = fftconvolve(speech.samples, h)
    if renormalize:
        peak_in, peak_out = np.max(np.abs(speech.samples)), np.max(np.abs(y))
        if peak_out > 0:
            y = y * (peak_in / peak_out)
    return AudioBuffer(y, speech.sample_rate)


def gen_test_rir(t60: float, length: float, sample_rate: int, seed: int = 0) -> AudioBuffer:
    """Exponentially decaying white noise reaching -60 dB energy after ``t60`` seconds."""
    if t60 <= 0:
        raise ParameterError("t60 must be positive")
    n = max(1, int(round(length * sample_rate)))
    t = np.arange(n) / sample_rate
    envelope = np.exp(-t * 3 * np.log(10) / t60)
    return AudioBuffer(np.random.default_rng(seed).standard_normal(n) * envelope, sample_rate)


def schroeder_decay(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at the start)."""
    energy = np.cumsum(np.asarray(rir, dtype=np.float64)[::-1]**2)[::-1]
    return 10 * np.log10(np.maximum(energy / energy[0], 1e-300))


def measure_t60(rir: AudioBuffer, start_db: float = -5.0, stop_db: float = -25.0) -> float:
    """Reverberation time from a line fit to the decay curve, extrapolated to -60 dB."""
    edc = schroeder_decay(rir.samples)
    t = np.arange(len(edc)) / rir.sample_rate
    sel = (edc <= start_db) & (edc >= stop_db)
    if sel.sum() < 2:
        raise ParameterError("decay curve too short to fit")
    slope, _ = np.polyfit(t[sel], edc[sel], 1)
    return -60.0 / slope


# -- corpus evaluation --------------------------------------------------

@dataclass
class Condition:
    utterance: str
    noise: str
    snr_db: float
    reverb: bool


@dataclass
class ConditionResult:
    condition: Condition
    report: EvalReport

    def row(self) -> dict:
        c = self.condition
        return dict(utterance=c.utterance, noise=c.noise, snr_db=_fmt_snr(c.snr_db),
                    reverb=int(c.reverb), **{k: _fmt(v) for k, v in self.report.to_dict().items()})


CSV_FIELDS = ["utterance", "noise", "snr_db", "reverb", "gpe", "vde", "n_voiced_ref",
              "n_gross_errors", "n_v_misclassified", "n_uv_misclassified", "n_total"]


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return v


def _fmt_snr(snr: float) -> str:
    return "clean" if math.isinf(snr) else f"{snr:g}"


def degrade(speech: AudioBuffer, noise: AudioBuffer | None, snr_db: float,
            rir: AudioBuffer | None = None, seed: int = 0,
            renormalize: bool = True, active_only: bool = True) -> AudioBuffer:
    """Apply the reverberation-then-noise protocol to one utterance.

    Speech and noise are both convolved with ``rir`` (trimmed back to the
    speech length) before the noise is added at ``snr_db``.
    """
    n = len(speech)
    if rir is not None:
        speech = AudioBuffer(convolve_rir(speech, rir, renormalize).samples[:n], speech.sample_rate)
    if noise is None or (math.isinf(snr_db) and snr_db > 0):
        return speech
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, len(noise) - n + 1)) if len(noise) > n else 0
    seg = AudioBuffer(_noise_segment(noise.samples, n, True, offset), noise.sample_rate)
    if rir is not None:
        seg = AudioBuffer(convolve_rir(seg, rir, renormalize).samples[:n], seg.sample_rate)
    return mix_noise_at_snr(speech, seg, snr_db, active_only=active_only)


def _run_cell(args):
    from .tracker import PitchTracker

    speech, ref, noise, cond, rir, config, seed = args
    audio = degrade(speech, noise, cond.snr_db, rir, seed)
    track = PitchTracker(config).track(audio)
    if len(track) == 0:
        log.warning("%s: signal too short to analyze", cond.utterance)
        report = EvalReport(n_voiced_ref=int(ref.voiced.sum()), n_total=len(ref))
    else:
        report = evaluate(track, ref)
    return ConditionResult(cond, report)


@dataclass
class CorpusReport:
    results: list
    skipped: list = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Mean GPE/VDE per (noise, SNR, reverb) cell across utterances."""
        groups = {}
        for res in self.results:
            c = res.condition
            groups.setdefault((c.noise, c.snr_db, c.reverb), []).append(res.report)
        out = []
        for (noise, snr, reverb), reps in groups.items():
            gpes = [r.gpe for r in reps if not math.isnan(r.gpe)]
            vdes = [r.vde for r in reps if not math.isnan(r.vde)]
            out.append(dict(noise=noise, snr_db=_fmt_snr(snr), reverb=int(reverb),
                            n_utterances=len(reps),
                            mean_gpe=float(np.mean(gpes)) if gpes else math.nan,
                            mean_vde=float(np.mean(vdes)) if vdes else math.nan))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
            writer.writeheader()
            for res in self.results:
                writer.writerow(res.row())

    def write_json(self, path) -> None:
        data = dict(conditions=[r.row() for r in self.results],
                    aggregate=[{k: _fmt(v) for k, v in a.items()} for a in self.aggregate()],
                    skipped=self.skipped)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)


def find_reference(ref_dir: Path, stem: str):
    for suffix in REF_SUFFIXES:
        cand = ref_dir / f"{stem}{suffix}"
        if cand.exists():
            return cand
    return None


def evaluate_corpus(utterances: list, noises: list, snrs: list, rir=None, config=None,
                    seed: int = 0, workers: int = 1) -> CorpusReport:
    """Score every (utterance, noise, SNR) cell.

    ``utterances`` holds ``(name, AudioBuffer, ReferenceTrack)`` triples and
    ``noises`` holds ``(name, AudioBuffer)`` pairs. An empty ``snrs`` list
    evaluates the clean (or only reverberant) signals. The noise excerpt of
    each cell depends on the seed and the utterance/noise indices only, so
    every SNR of a given pair sees the same noise.
    """
    from .config import TrackerConfig

    config = config or TrackerConfig()
    jobs = []
    reverb = rir is not None
    for ui, (name, speech, ref) in enumerate(utterances):
        if not snrs or not noises:
            jobs.append((speech, ref, None, Condition(name, "none", math.inf, reverb),
                         rir, config, 0))
            if not snrs:
                continue
        for ni, (noise_name, noise) in enumerate(noises):
            if noise.sample_rate != speech.sample_rate:
                raise ParameterError(f"noise {noise_name} sample rate differs from {name}")
            cell_seed = int(np.random.SeedSequence([seed, ui, ni]).generate_state(1)[0])
            for snr in snrs:
                jobs.append((speech, ref, noise, Condition(name, noise_name, float(snr), reverb),
                             rir, config, cell_seed))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]
    return CorpusReport(results)
