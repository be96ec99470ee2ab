"""Offline segmentation baselines with a squared-error (L2) segment cost.

Change indices follow the package convention: a change at ``t`` starts a new
segment at ``t``, so a segmentation of ``[0, T)`` is described by the sorted
interior boundaries.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .types import MultiChangeLabel


class DiscouragedFixedCount(UserWarning):
    pass


class L2Cost:
    """Sum of squared deviations from the segment mean, O(D) per query via prefix sums."""

    def __init__(self, seq):
        x = np.asarray(seq, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        self.n = x.shape[0]
        self._s = np.vstack([np.zeros(x.shape[1]), np.cumsum(x, axis=0)])
        self._ss = np.concatenate([[0.0], np.cumsum((x * x).sum(axis=1))])

    def cost(self, a: int, b: int) -> float:
        """Cost of ``x[a..b]`` (both ends inclusive)."""
        if not 0 <= a <= b <= self.n - 1:
            raise ValueError(f"empty or out-of-range segment [{a}, {b}]")
        return self.span(a, b + 1)

    def span(self, start: int, stop: int) -> float:
        """Cost of the half-open span ``x[start:stop]``."""
        m = stop - start
        seg = self._s[stop] - self._s[start]
        return max(float(self._ss[stop] - self._ss[start] - seg @ seg / m), 0.0)

    def spans(self, starts: np.ndarray, stop: int) -> np.ndarray:
        m = (stop - starts)[:, None]
        seg = self._s[stop] - self._s[starts]
        return np.maximum(self._ss[stop] - self._ss[starts] - (seg * seg).sum(axis=1) / m[:, 0], 0.0)

    def stops(self, start: int, stops: np.ndarray) -> np.ndarray:
        m = stops - start
        seg = self._s[stops] - self._s[start]
        return np.maximum(self._ss[stops] - self._ss[start] - (seg * seg).sum(axis=1) / m, 0.0)


def l2_cost(seq, a: int, b: int) -> float:
    return L2Cost(seq).cost(a, b)


def segmentation_objective(seq, change_points, penalty: float) -> float:
    cost = L2Cost(seq)
    bounds = [0, *change_points, cost.n]
    return sum(cost.span(s, e) for s, e in zip(bounds, bounds[1:])) + penalty * len(change_points)


@dataclass(frozen=True)
class SegmentationSpec:
    method: Literal["pelt", "binseg"] = "pelt"
    penalty: Optional[float] = None
    n_changes: Optional[int] = None
    min_segment_len: int = 1

    def __post_init__(self):
        if self.method not in ("pelt", "binseg"):
            raise ValueError(f"unknown method {self.method!r}")
        if (self.penalty is None) == (self.n_changes is None):
            raise ValueError("give exactly one of penalty or n_changes")
        if self.penalty is not None and not self.penalty >= 0:
            raise ValueError("penalty must be non-negative")
        if self.n_changes is not None and self.n_changes < 0:
            raise ValueError("n_changes must be non-negative")
        if self.min_segment_len < 1:
            raise ValueError("min_segment_len must be >= 1")
        if self.method == "pelt" and self.penalty is None:
            raise ValueError("PELT needs a penalty")


def pelt_segment(seq, spec: SegmentationSpec) -> MultiChangeLabel:
    """Exact penalised segmentation by dynamic programming with PELT pruning.

    With a minimum segment length ``m > 1`` a pruned candidate is kept for
    ``m`` more steps, since the partition that justified pruning it cannot
    end a segment sooner than that.
    """
    cost = L2Cost(seq)
    n, m, beta = cost.n, spec.min_segment_len, spec.penalty
    if math.isinf(beta) or n < 2 * m:
        return MultiChangeLabel(())
    best = np.full(n + 1, np.inf)
    best[0] = -beta
    last = np.zeros(n + 1, dtype=np.int64)
    cands = np.array([0], dtype=np.int64)
    expiry = np.array([np.iinfo(np.int64).max], dtype=np.int64)
    for t in range(m, n + 1):
        keep = expiry > t
        cands, expiry = cands[keep], expiry[keep]
        ok = (t - cands) >= m
        if ok.any():
            c_ok = cands[ok]
            vals = best[c_ok] + cost.spans(c_ok, t)
            j = int(np.argmin(vals))
            best[t] = vals[j] + beta
            last[t] = c_ok[j]
            # prune: F[tau] + C(tau, t) > F[t] can never win again
            prune = np.zeros(cands.size, dtype=bool)
            prune[np.flatnonzero(ok)] = vals > best[t] + 1e-12 * max(1.0, abs(best[t]))
            newly = prune & (expiry == np.iinfo(np.int64).max)
            expiry = np.where(newly, t + m, expiry)
        if t + m <= n and np.isfinite(best[t]):
            cands = np.append(cands, t)
            expiry = np.append(expiry, np.iinfo(np.int64).max)
    cps = []
    t = n
    while t > 0:
        t = int(last[t])
        if t > 0:
            cps.append(t)
    return MultiChangeLabel(tuple(sorted(cps)))


def _best_split(cost: L2Cost, start: int, stop: int, m: int):
    """Split of ``[start, stop)`` maximising the cost reduction; ``None`` if none is admissible."""
    if stop - start < 2 * m:
        return None
    ts = np.arange(start + m, stop - m + 1)
    left = cost.stops(start, ts)
    right = cost.spans(ts, stop)
    gains = cost.span(start, stop) - left - right
    j = int(np.argmax(gains))
    return float(gains[j]), int(ts[j])


def binseg_segment(seq, spec: SegmentationSpec) -> MultiChangeLabel:
    """Greedy binary segmentation: repeatedly apply the best single split over all segments."""
    if spec.n_changes:
        warnings.warn("a fixed change count forces alarms on change-free sequences; prefer a penalty",
                      DiscouragedFixedCount, stacklevel=2)
    cost = L2Cost(seq)
    m = spec.min_segment_len
    segments = [(0, cost.n)]
    splits = {seg: _best_split(cost, *seg, m) for seg in segments}
    cps: list[int] = []
    while True:
        if spec.n_changes is not None and len(cps) >= spec.n_changes:
            break
        options = [(v[0], seg) for seg, v in splits.items() if v is not None]
        if not options:
            break
        gain, seg = max(options, key=lambda o: (o[0], -o[1][0]))
        if spec.penalty is not None and gain <= spec.penalty:
            break
        t = splits.pop(seg)[1]
        cps.append(t)
        for child in ((seg[0], t), (t, seg[1])):
            splits[child] = _best_split(cost, *child, m)
    return MultiChangeLabel(tuple(sorted(cps)))


def segment(seq, spec: SegmentationSpec) -> MultiChangeLabel:
    return pelt_segment(seq, spec) if spec.method == "pelt" else binseg_segment(seq, spec)


def penalty_grid(low: float = 1.0, high: float = 1e6, n: int = 25) -> np.ndarray:
    return np.logspace(np.log10(low), np.log10(high), n)
