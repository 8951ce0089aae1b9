"""Tracker configuration: defaults, validation and the flat ``key = value`` file format.

Values resolve in three layers: built-in defaults, then a config file, then
``--set key=value`` overrides from the command line. Parameters whose
natural unit is time (``temporal_step``, ``S``, ``J``, ``W``,
``viterbi_max_step``) accept ``auto``, which derives them from the sample
rate and stride when the tracker runs.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Optional

from .decode import DIFFERENCE, SUM_LIKELIHOOD
from .errors import ParameterError
from .voicing import LITERAL, VOICED_POSTERIOR

AUTO = "auto"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class TrackerConfig:
    # analysis range and framing
    f_min: float = 50.0
    f_max: float = 400.0
    window_dur: float = 0.040
    stride: int = 80
    lowpass_cutoff: float = 1500.0
    lowpass_order: int = 4
    # likelihood stages
    H: int = 4
    harmonic_weights: tuple = ()
    r_mode: str = "proportional"
    r: int = 1
    k: float = -1.0
    K: int = 2
    temporal_step: Optional[int] = None
    # decoding
    U: int = 2
    viterbi_cost_mode: str = SUM_LIKELIHOOD
    viterbi_max_step: Optional[int] = None
    # rectification
    S: Optional[int] = None
    J: Optional[int] = None
    alpha: float = 0.3
    # voicing
    W: Optional[int] = None
    voicing_threshold: float = 0.5
    voicing_orientation: str = VOICED_POSTERIOR
    gmm_max_iters: int = 200
    gmm_tol: float = 1e-8
    # ablation switches
    harmonic_summation: bool = True
    temporal_accumulation: bool = True
    viterbi: bool = True
    rectification: bool = True
    voicing: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ParameterError(msg)

        need(0 < self.f_min < self.f_max, "need 0 < f_min < f_max")
        need(self.window_dur > 0, "window_dur must be positive")
        need(self.stride >= 1, "stride must be >= 1")
        need(self.lowpass_cutoff > 0, "lowpass_cutoff must be positive")
        need(self.lowpass_order >= 1, "lowpass_order must be >= 1")
        need(self.H >= 1, "H must be >= 1")
        need(not self.harmonic_weights or len(self.harmonic_weights) == self.H,
             "harmonic_weights needs exactly H entries")
        need(all(w >= 0 for w in self.harmonic_weights), "harmonic_weights must be >= 0")
        need(self.r_mode in ("proportional", "fixed"), "r_mode is 'proportional' or 'fixed'")
        need(self.r >= 0, "r must be >= 0")
        need(self.k != 0, "k must be nonzero")
        need(self.K >= 0, "K must be >= 0")
        need(self.temporal_step is None or self.temporal_step >= 1, "temporal_step must be >= 1")
        need(self.U >= 1, "U must be >= 1")
        need(self.viterbi_cost_mode in (SUM_LIKELIHOOD, DIFFERENCE),
             f"viterbi_cost_mode is {SUM_LIKELIHOOD!r} or {DIFFERENCE!r}")
        need(self.viterbi_max_step is None or self.viterbi_max_step >= 1,
             "viterbi_max_step must be >= 1")
        need(self.S is None or self.S >= 1, "S must be >= 1")
        need(self.J is None or self.J >= 0, "J must be >= 0")
        need(0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]")
        need(self.W is None or self.W >= 1, "W must be >= 1")
        need(0.0 <= self.voicing_threshold <= 1.0, "voicing_threshold must lie in [0, 1]")
        need(self.voicing_orientation in (VOICED_POSTERIOR, LITERAL),
             f"voicing_orientation is {VOICED_POSTERIOR!r} or {LITERAL!r}")
        need(self.gmm_max_iters >= 1, "gmm_max_iters must be >= 1")

    # -- derived values -------------------------------------------------

    def frames_for(self, seconds: float, sample_rate: int, minimum: int) -> int:
        return max(minimum, int(math.floor(seconds * sample_rate / self.stride + 0.5)))

    def resolved(self, sample_rate: int, l_min: int) -> dict:
        """Concrete values for every ``auto`` parameter."""
        return dict(
            temporal_step=self.temporal_step or self.frames_for(0.005, sample_rate, 1),
            viterbi_max_step=self.viterbi_max_step or self.stride,
            S=self.S or self.frames_for(0.010, sample_rate, 1),
            J=self.J if self.J is not None else self.frames_for(0.005, sample_rate, 0),
            # a few lags: about the width of one harmonic-summation peak
            W=self.W or max(1, int(round(l_min / 10))),
        )

    def weights(self) -> tuple:
        if self.harmonic_weights:
            return tuple(float(w) for w in self.harmonic_weights)
        return tuple(1.0 / h for h in range(2, self.H + 2))

    # -- (de)serialization ----------------------------------------------

    def with_overrides(self, overrides: dict) -> "TrackerConfig":
        values = dataclasses.asdict(self)
        values.update(_parse_items(overrides))
        return TrackerConfig(**values)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "TrackerConfig":
        items = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
            items[key.strip()] = val.strip()
        return cls().with_overrides(items)

    @classmethod
    def load(cls, path) -> "TrackerConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


_HINTS = typing.get_type_hints(TrackerConfig)


def _format(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(key: str, text):
    hint = _HINTS[key]
    optional = typing.get_origin(hint) is typing.Union
    base = [a for a in typing.get_args(hint) if a is not type(None)][0] if optional else hint
    if not isinstance(text, str):
        return text
    text = text.strip()
    if optional and text.lower() == AUTO:
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if base is int:
            as_float = float(text)
            if as_float != int(as_float):
                raise ValueError(text)
            return int(as_float)
        if base is float:
            return float(text)
        if base is tuple:
            return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ParameterError(f"bad value for {key}: {text!r}") from None
    return text


def _parse_items(items: dict) -> dict:
    out = {}
    for key, val in items.items():
        if key not in _HINTS:
            raise ParameterError(f"unknown config key {key!r}")
        out[key] = _convert(key, val)
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, val = text.partition("=")
    if not sep or not key.strip():
        raise ParameterError(f"expected key=value, got {text!r}")
    return key.strip(), val.strip()
