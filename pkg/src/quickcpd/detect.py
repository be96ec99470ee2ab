"""Online decision rules: thresholding a probability series, and Page's CUSUM."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .types import DetectionResult

MultiMode = Literal["first", "all"]


@dataclass(frozen=True)
class ThresholdRule:
    threshold: float = 0.5
    mode: MultiMode = "first"

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.mode not in ("first", "all"):
            raise ValueError(f"unknown mode {self.mode!r}")


def detect(p, rule: ThresholdRule) -> DetectionResult:
    """Alarm where ``p[t] > threshold`` (strictly).

    ``first`` keeps only the first such step; ``all`` keeps every up-crossing,
    i.e. steps above the threshold whose predecessor was not.
    """
    above = np.asarray(p, dtype=np.float64) > rule.threshold
    if rule.mode == "first":
        idx = np.flatnonzero(above)
        return DetectionResult((int(idx[0]),) if idx.size else ())
    prev = np.concatenate([[False], above[:-1]])
    return DetectionResult(tuple(int(t) for t in np.flatnonzero(above & ~prev)))


def first_crossings(probs: np.ndarray, thresholds) -> np.ndarray:
    """First index with ``p > s`` for every (threshold, sequence) pair; ``-1`` if none."""
    probs = np.asarray(probs)
    out = np.full((len(thresholds), probs.shape[0]), -1, dtype=np.int64)
    for k, s in enumerate(thresholds):
        above = probs > s
        anyv = above.any(axis=1)
        out[k, anyv] = above[anyv].argmax(axis=1)
    return out


@dataclass(frozen=True)
class CusumSpec:
    mu0: float
    mu1: float
    sigma: float = 1.0
    decision_limit: float = 5.0

    def __post_init__(self):
        if self.mu0 == self.mu1:
            raise ValueError("mu1 must differ from mu0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.decision_limit > 0:
            raise ValueError("decision_limit must be positive")


def cusum_statistic(x, spec: CusumSpec) -> np.ndarray:
    """Page recursion ``S_t = max(0, S_{t-1} + llr_t)`` with Gaussian log-likelihood ratio steps."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("CUSUM works on one-dimensional series")
        x = x[:, 0]
    llr = (spec.mu1 - spec.mu0) / spec.sigma**2 * (x - 0.5 * (spec.mu0 + spec.mu1))
    s = np.empty_like(llr)
    acc = 0.0
    for t, step in enumerate(llr):
        acc = max(0.0, acc + step)
        s[t] = acc
    return s


def cusum_detect(x, spec: CusumSpec) -> DetectionResult:
    if math.isinf(spec.decision_limit):
        return DetectionResult()
    idx = np.flatnonzero(cusum_statistic(x, spec) >= spec.decision_limit)
    return DetectionResult((int(idx[0]),) if idx.size else ())
