"""Command-line front end.

Commands::

    harmopitch track IN.wav [-o OUT.csv] [--format csv|json]
    harmopitch eval SPEECH_DIR REF_DIR [--noise N ...] [--snr DB ...] [--rir R.wav] -o OUT_DIR
    harmopitch synth KIND --f0 HZ [--f0-end HZ] [--duration S] [--snr DB] -o OUT.wav
    harmopitch dump-lattice IN.wav --stage STAGE -o OUT.csv|OUT.npz

Every command accepts ``--config FILE``, ``--set key=value`` (repeatable),
``--stride`` and ``--seed``. Exit status is 0 on success, 1 when processing
fails and 2 for usage, configuration or file errors. Outputs are written to
a temporary file and moved into place, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import read_wav, write_wav
from .config import TrackerConfig, parse_assignment
from .errors import ParameterError
from .evaluation import evaluate_corpus, find_reference, gen_test_rir, read_reference
from .likelihood import Stage, save_lattice
from .synth import KINDS, NOISE_GENERATORS, make_noise, synthesize
from .tracker import PitchTracker

log = logging.getLogger("harmopitch")

EXIT_OK, EXIT_PROCESSING, EXIT_USAGE = 0, 1, 2
AUDIO_SUFFIXES = (".wav",)
UPSAMPLED = "upsampled"


class UsageError(Exception):
    """Bad arguments, configuration or unreadable input (exit status 2)."""


# -- helpers --------------------------------------------------------------

@contextlib.contextmanager
def atomic_output(path):
    """Yield a temporary path next to ``path``; rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=path.suffix,
                               dir=path.parent if str(path.parent) else ".")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_config(args) -> TrackerConfig:
    """Defaults, then ``--config``, then ``--stride`` and ``--set`` overrides."""
    try:
        cfg = TrackerConfig.load(args.config) if args.config else TrackerConfig()
        overrides = {}
        if args.stride is not None:
            overrides["stride"] = args.stride
        for item in args.set or []:
            key, value = parse_assignment(item)
            overrides[key] = value
        return cfg.with_overrides(overrides) if overrides else cfg
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except ParameterError as exc:
        raise UsageError(f"bad configuration: {exc}") from None


def load_audio(path):
    try:
        return read_wav(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _output_format(args) -> str:
    if args.format:
        return args.format
    return "json" if args.output and str(args.output).endswith(".json") else "csv"


# -- commands -------------------------------------------------------------

def cmd_track(args) -> int:
    cfg = load_config(args)
    audio = load_audio(args.input)
    track = PitchTracker(cfg).track(audio)
    fmt = _output_format(args)
    writer = track.to_json if fmt == "json" else track.to_csv
    if args.output is None:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / f"track.{fmt}"
            writer(out)
            sys.stdout.write(out.read_text())
    else:
        with atomic_output(args.output) as tmp:
            writer(tmp)
    return EXIT_OK


def _noise_sources(specs):
    """Noise files, or generator names (white, pink, brown) when no such file exists."""
    noises = []
    for spec in specs:
        if os.path.exists(spec):
            noises.append((Path(spec).stem, load_audio(spec)))
        elif spec in NOISE_GENERATORS:
            noises.append((spec, None))
        else:
            raise UsageError(f"noise {spec!r} is neither a file nor one of {sorted(NOISE_GENERATORS)}")
    return noises


def _parse_snrs(values) -> list:
    snrs = []
    for item in values or []:
        for tok in str(item).split(","):
            tok = tok.strip()
            if not tok:
                continue
            if tok.lower() in ("clean", "inf"):
                snrs.append(math.inf)
                continue
            try:
                snrs.append(float(tok))
            except ValueError:
                raise UsageError(f"bad SNR value {tok!r}") from None
    return snrs


def cmd_eval(args) -> int:
    cfg = load_config(args)
    speech_dir, ref_dir = Path(args.speech_dir), Path(args.ref_dir)
    for d in (speech_dir, ref_dir):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    snrs = _parse_snrs(args.snr)
    utterances, skipped = [], []
    for wav in sorted(p for p in speech_dir.iterdir() if p.suffix.lower() in AUDIO_SUFFIXES):
        ref_path = find_reference(ref_dir, wav.stem)
        if ref_path is None:
            log.warning("no reference for %s; skipped", wav.name)
            skipped.append(wav.name)
            continue
        try:
            ref = read_reference(ref_path)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read reference {ref_path}: {exc}") from None
        utterances.append((wav.stem, load_audio(wav), ref))
    if not utterances:
        raise UsageError(f"no speech files with references in {speech_dir}")

    rates = {a.sample_rate for _, a, _ in utterances}
    if len(rates) > 1:
        raise UsageError(f"speech files mix sample rates {sorted(rates)}")
    sr = rates.pop()
    longest = max(len(a) for _, a, _ in utterances)
    noises = []
    for j, (name, audio) in enumerate(_noise_sources(args.noise or [])):
        if audio is None:
            audio = make_noise(name, longest, sr, seed=args.seed + 1000 + j)
        noises.append((name, audio))
    if snrs and not noises:
        raise UsageError("--snr needs at least one --noise")

    rir = None
    if args.rir:
        rir = load_audio(args.rir)
    elif args.t60 is not None:
        rir = gen_test_rir(args.t60, max(1.5 * args.t60, 0.1), sr, seed=args.seed)

    report = evaluate_corpus(utterances, noises, snrs, rir, cfg, seed=args.seed,
                             workers=args.workers)
    report.skipped = skipped

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    with atomic_output(out_dir / "conditions.csv") as tmp:
        report.write_csv(tmp)
    with atomic_output(out_dir / "aggregate.csv") as tmp:
        _write_aggregate(report.aggregate(), tmp)
    with atomic_output(out_dir / "report.json") as tmp:
        report.write_json(tmp)
    for row in report.aggregate():
        print(f"{row['noise']:>8} snr={row['snr_db']:>6} reverb={row['reverb']} "
              f"n={row['n_utterances']} gpe={row['mean_gpe']:.4f} vde={row['mean_vde']:.4f}")
    return EXIT_OK


def _write_aggregate(rows, path) -> None:
    fields = ["noise", "snr_db", "reverb", "n_utterances", "mean_gpe", "mean_vde"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def cmd_synth(args) -> int:
    cfg = load_config(args)
    for f in (args.f0, args.f0_end):
        if f is not None and not cfg.f_min <= f <= cfg.f_max:
            raise UsageError(f"f0 {f} Hz outside the tracker range [{cfg.f_min}, {cfg.f_max}]")
    snr = args.snr[0] if args.snr else None
    if args.snr and len(args.snr) > 1:
        raise UsageError("synth takes a single --snr value")
    snr = _parse_snrs([snr])[0] if snr is not None else None
    try:
        audio, ref = synthesize(args.kind, args.f0, args.f0_end, args.duration, args.sample_rate,
                                snr_db=snr, seed=args.seed, burst_period=args.burst_period,
                                duty=args.duty, jitter=args.jitter)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.output)
    ref_path = out.with_suffix(".f0")
    with atomic_output(out) as tmp_wav, atomic_output(ref_path) as tmp_ref:
        write_wav(tmp_wav, audio, pcm16=args.pcm16)
        ref.save(tmp_ref)
    return EXIT_OK


def cmd_dump_lattice(args) -> int:
    cfg = load_config(args)
    audio = load_audio(args.input)
    analysis = PitchTracker(cfg).analyze(audio)
    if args.stage == UPSAMPLED:
        with atomic_output(args.output) as tmp:
            _save_upsampled(analysis, tmp, cfg.stride, audio.sample_rate)
        return EXIT_OK
    stage = Stage(args.stage)
    if stage not in analysis.lattices:
        raise UsageError(f"stage {stage.value} is disabled by the configuration")
    with atomic_output(args.output) as tmp:
        save_lattice(analysis.lattices[stage], tmp)
    return EXIT_OK


def _save_upsampled(analysis, path, stride, sample_rate) -> None:
    """Upsampled lattice with the geometric grid lags as the first row."""
    lags = analysis.grid.lags
    if str(path).endswith(".npz"):
        np.savez(path, values=analysis.upsampled, lags=lags, sample_rate=sample_rate,
                 stride=stride, stage=UPSAMPLED)
        return
    header = f"sample_rate={sample_rate}\nstride={stride}\nstage={UPSAMPLED}\nlags=" + \
        ",".join(f"{v:.6f}" for v in lags)
    np.savetxt(path, analysis.upsampled, delimiter=",", header=header, comments="# ", fmt="%.10g")


# -- argument parsing -----------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.add_argument("--stride", type=int, help="frame stride in samples")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harmopitch",
                                     description="Harmonic-summation NAMDF pitch tracker.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="estimate the pitch track of a WAV file")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="output file (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"))
    _common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a corpus under noise and reverberation")
    p.add_argument("speech_dir")
    p.add_argument("ref_dir")
    p.add_argument("--noise", action="append",
                   help="noise WAV file or generator name (white, pink, brown); repeatable")
    p.add_argument("--snr", nargs="+", help="SNR levels in dB (space or comma separated)")
    p.add_argument("--rir", help="room impulse response WAV")
    p.add_argument("--t60", type=float, help="use a generated test RIR with this t60 (s)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="ignored; both are written")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic test signal and its reference track")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--f0", type=float, required=True, help="fundamental (start) frequency, Hz")
    p.add_argument("--f0-end", type=float, help="end frequency of a chirp, Hz")
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--snr", nargs=1, help="add white noise at this SNR (dB)")
    p.add_argument("--burst-period", type=float, default=0.4)
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--jitter", type=float, default=0.005, help="RMS relative pitch wander")
    p.add_argument("--pcm16", action="store_true", help="16-bit PCM instead of 32-bit float")
    p.add_argument("-o", "--output", required=True, help="WAV path; the track goes next to it as .f0")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-lattice", help="write an intermediate likelihood lattice")
    p.add_argument("input")
    p.add_argument("--stage", default=Stage.TEMPORAL.value,
                   choices=[s.value for s in Stage] + [UPSAMPLED])
    p.add_argument("-o", "--output", required=True, help=".csv or .npz path")
    p.add_argument("--format", choices=("csv", "json"), help="ignored; the suffix decides")
    _common(p)
    p.set_defaults(func=cmd_dump_lattice)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"harmopitch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, ValueError, FloatingPointError, MemoryError) as exc:
        print(f"harmopitch: processing failed: {exc}", file=sys.stderr)
        return EXIT_PROCESSING
    except OSError as exc:
        print(f"harmopitch: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
