"""Log-spaced lag grid and continuity-constrained Viterbi decoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError

SUM_LIKELIHOOD = "sum_likelihood"
DIFFERENCE = "difference"


@dataclass(frozen=True)
class GeometricLagGrid:
    lags: np.ndarray
    U: int

    @classmethod
    def build(cls, l_min: float, l_max: float, U: int = 2) -> "GeometricLagGrid":
        """Lags ``l_min * (l_max / l_min) ** t`` for ``t`` in ``U*(l_max-l_min)+1`` even steps."""
        if U < 1:
            raise ParameterError(f"upsampling factor must be >= 1, got {U}")
        if not 0 < l_min < l_max:
            raise ParameterError(f"need 0 < l_min < l_max, got {l_min}, {l_max}")
        n = int(round(U * (l_max - l_min))) + 1
        t = np.linspace(0.0, 1.0, n)
        lags = l_min * (l_max / l_min) ** t
        # pin the endpoints exactly
        lags[0], lags[-1] = l_min, l_max
        return cls(lags, int(U))

    def __len__(self):
        return len(self.lags)


@dataclass
class StatePath:
    state_indices: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.state_indices)


def geometric_upsample(values: np.ndarray, lag_offset: int, grid: GeometricLagGrid) -> np.ndarray:
    """Linearly interpolate integer-lag likelihoods onto the grid.

    ``values`` may be a single column or a frames x lags matrix.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    pos = grid.lags - lag_offset
    if pos[0] < -1e-9 or pos[-1] > n - 1 + 1e-9:
        raise ParameterError("grid lags fall outside the column's lag range")
    pos = np.clip(pos, 0, n - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), n - 2) if n > 1 else np.zeros(len(pos), int)
    frac = pos - lo
    if n == 1:
        return np.repeat(values[..., :1], len(pos), axis=-1)
    return values[..., lo] * (1.0 - frac) + values[..., lo + 1] * frac


def _best_predecessor(prev: np.ndarray, max_step: int):
    """For each state, the best score among states within ``max_step`` and its index.

    Ties resolve to the lowest index.
    """
    n = len(prev)
    padded = np.concatenate([np.full(max_step, -np.inf), prev, np.full(max_step, -np.inf)])
    win = sliding_window_view(padded, 2 * max_step + 1)
    arg = np.argmax(win, axis=1)
    best = win[np.arange(n), arg]
    return best, np.arange(n) + arg - max_step


def viterbi_decode(lattice: np.ndarray, max_step: int = 1,
                   cost_mode: str = SUM_LIKELIHOOD) -> StatePath:
    """Best state sequence through a frames x states likelihood matrix.

    Consecutive states may differ by at most ``max_step`` indices. In
    ``sum_likelihood`` mode the path maximizes the summed likelihoods of its
    states; ``difference`` instead sums the transition terms
    ``phi[i+1, t'] - phi[i, t]``. Ties go to the lower state index.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    if lattice.size == 0:
        return StatePath(np.zeros(0, dtype=np.int64), np.zeros(0))
    if lattice.ndim != 2:
        raise ParameterError("lattice must be a frames x states matrix")
    if max_step < 1:
        raise ParameterError(f"max_step must be >= 1, got {max_step}")
    if cost_mode not in (SUM_LIKELIHOOD, DIFFERENCE):
        raise ParameterError(f"unknown cost mode {cost_mode!r}")
    n_frames, n_states = lattice.shape
    step = min(max_step, max(n_states - 1, 1))
    back = np.zeros((n_frames, n_states), dtype=np.int64)
    if cost_mode == SUM_LIKELIHOOD:
        acc = lattice[0].copy()
    else:
        acc = np.zeros(n_states)
    for i in range(1, n_frames):
        carry = acc if cost_mode == SUM_LIKELIHOOD else acc - lattice[i - 1]
        best, arg = _best_predecessor(carry, step)
        acc = best + lattice[i]
        back[i] = arg
    states = np.empty(n_frames, dtype=np.int64)
    states[-1] = int(np.argmax(acc))
    for i in range(n_frames - 1, 0, -1):
        states[i - 1] = back[i, states[i]]
    return StatePath(states, lattice[np.arange(n_frames), states])


def path_score(lattice: np.ndarray, states, cost_mode: str = SUM_LIKELIHOOD) -> float:
    """Objective value of a given path under ``cost_mode``."""
    lattice = np.asarray(lattice)
    vals = lattice[np.arange(len(states)), np.asarray(states)]
    if cost_mode == SUM_LIKELIHOOD:
        return float(vals.sum())
    return float(np.sum(np.diff(vals)))


def greedy_decode(lattice: np.ndarray) -> StatePath:
    """Per-frame argmax, used when decoding is switched off."""
    lattice = np.asarray(lattice, dtype=np.float64)
    if lattice.size == 0:
        return StatePath(np.zeros(0, dtype=np.int64), np.zeros(0))
    states = np.argmax(lattice, axis=1)
    return StatePath(states, lattice[np.arange(len(states)), states])


def path_to_f0(path: StatePath, grid: GeometricLagGrid, sample_rate: int) -> np.ndarray:
    return sample_rate / grid.lags[path.state_indices]
