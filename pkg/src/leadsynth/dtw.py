"""Banded dynamic time warping between RR segments of differing lengths.

Squared pointwise distance, symmetric steps (diagonal/up/left), Sakoe-Chiba
band expressed as a fraction of the longer sequence and always widened
enough to connect the corners.  Matching normalizes amplitudes first so
that shape rather than energy drives similarity; energy is handled
separately by the synthesis transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyLibrary, EmptySequence
from .delineate import BeatSegment


@dataclass(frozen=True)
class DtwConfig:
    window_frac: float = 0.15   # Sakoe-Chiba band / longer length
    normalize: bool = True      # divide the cost by the warping-path length
    znorm: bool = True          # z-normalize amplitudes when matching beats

    def __post_init__(self):
        if not (0 < self.window_frac <= 1):
            raise ValueError(f"window fraction must be in (0, 1], got {self.window_frac}")


@njit(cache=True)
def _dtw_kernel(a, b, w):
    """Banded DP over two rolling rows; returns (total cost, path length).

    Ties between predecessors resolve to the shorter path, which keeps the
    result symmetric under argument swap.
    """
    n = a.shape[0]
    m = b.shape[0]
    inf = np.inf
    prev_c = np.full(m, inf)
    prev_s = np.zeros(m, dtype=np.int64)
    cur_c = np.full(m, inf)
    cur_s = np.zeros(m, dtype=np.int64)
    for i in range(n):
        jlo = i - w
        if jlo < 0:
            jlo = 0
        jhi = i + w
        if jhi > m - 1:
            jhi = m - 1
        for j in range(m):
            cur_c[j] = inf
        for j in range(jlo, jhi + 1):
            d = a[i] - b[j]
            d = d * d
            if i == 0 and j == 0:
                cur_c[0] = d
                cur_s[0] = 1
                continue
            best_c = inf
            best_s = 0
            if i > 0 and j > 0 and prev_c[j - 1] < inf:
                best_c = prev_c[j - 1]
                best_s = prev_s[j - 1]
            if i > 0 and prev_c[j] < inf:
                if prev_c[j] < best_c or (prev_c[j] == best_c and prev_s[j] < best_s):
                    best_c = prev_c[j]
                    best_s = prev_s[j]
            if j > 0 and cur_c[j - 1] < inf:
                if cur_c[j - 1] < best_c or (cur_c[j - 1] == best_c and cur_s[j - 1] < best_s):
                    best_c = cur_c[j - 1]
                    best_s = cur_s[j - 1]
            if best_c < inf:
                cur_c[j] = best_c + d
                cur_s[j] = best_s + 1
        tmp_c = prev_c
        prev_c = cur_c
        cur_c = tmp_c
        tmp_s = prev_s
        prev_s = cur_s
        cur_s = tmp_s
    return prev_c[m - 1], prev_s[m - 1]


def _band_width(n: int, m: int, frac: float) -> int:
    w = int(round(frac * max(n, m)))
    return max(w, abs(n - m) + 1)


def dtw_distance(a, b, config: DtwConfig = DtwConfig()) -> float:
    """DTW cost between two sequences; symmetric, zero for identical inputs.

    With normalization off the cost is the raw sum of squared differences
    along the best warping path (so equal inputs give exactly 0).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("dtw needs non-empty sequences")
    w = _band_width(a.size, b.size, config.window_frac)
    cost, steps = _dtw_kernel(a, b, w)
    if config.normalize:
        return float(cost) / float(steps)
    return float(cost)


def znorm(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    sd = x.std()
    if sd > 0:
        return (x - mu) / sd
    return x - mu


def nearest_beat(query: BeatSegment, library, config: DtwConfig = DtwConfig()):
    """Index and cost of the most similar library beat; ties go to the
    earliest (smallest index) historic beat."""
    if not library:
        raise EmptyLibrary("no historic beats to match against")
    q = znorm(query.samples) if config.znorm else np.asarray(query.samples, dtype=np.float64)
    best_idx, best_cost = 0, np.inf
    for idx, beat in enumerate(library):
        c = znorm(beat.samples) if config.znorm else np.asarray(beat.samples, dtype=np.float64)
        w = _band_width(q.size, c.size, config.window_frac)
        cost, steps = _dtw_kernel(q, c, w)
        cost = float(cost) / float(steps) if config.normalize else float(cost)
        if cost < best_cost:
            best_idx, best_cost = idx, cost
    return best_idx, best_cost
