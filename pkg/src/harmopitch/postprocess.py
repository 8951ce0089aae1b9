"""Repair of short likelihood dips inside voiced runs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class RectifyParams:
    S: int = 2
    J: int = 1
    alpha: float = 0.3

    def __post_init__(self):
        if self.S < 1 or self.J < 0 or not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"invalid rectification parameters {self}")


def rectify(scores, params: RectifyParams = RectifyParams()) -> np.ndarray:
    """Blend dips inside established voiced runs toward the recent average.

    A run is a stretch of frames scoring above half the utterance maximum.
    Once a run has lasted ``S`` frames, a frame at or below that threshold
    starts a smoothing window over itself and the next ``J`` frames:
    ``alpha * score + (1 - alpha) * avg``, where ``avg`` is the mean of the
    ``S`` outputs just before the dip (fixed at the dip). The run carries on
    if the last frame of the window is back above threshold in the input,
    otherwise it is reset.
    """
    x = np.asarray(scores, dtype=np.float64)
    out = x.copy()
    n = len(x)
    if n == 0:
        return out
    thr = x.max() / 2
    S, J, a = params.S, params.J, params.alpha
    run = 0
    i = 0
    while i < n:
        if x[i] > thr:
            run += 1
            i += 1
            continue
        if run < S:
            run = 0
            i += 1
            continue
        avg = out[i - S:i].mean()
        end = min(i + J, n - 1)
        out[i:end + 1] = a * x[i:end + 1] + (1 - a) * avg
        run = S if x[end] > thr else 0
        i = end + 1
    return out
