"""Evaluation of change detectors: confusion semantics, F1, delay, time to false alarm,
the delay/false-alarm detection curve and partition covering.

Conventions for quantities the detection outcome leaves undefined:

* a missed change counts as the worst delay inside the sequence, ``T - theta``;
* a sequence without a false alarm has time to false alarm ``T``;
* an alarm before the change is a false positive and contributes
  ``(tau - theta)^+ = 0`` to the mean delay.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detect import ThresholdRule, detect, first_crossings
from .types import ChangeLabel, DetectionResult, MultiChangeLabel


class Outcome(str, Enum):
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


def classify_outcome(label: ChangeLabel, result: DetectionResult) -> Outcome:
    tau = result.first_alarm
    if label.is_change:
        if tau is None:
            return Outcome.FN
        return Outcome.TP if tau >= label.theta else Outcome.FP
    return Outcome.TN if tau is None else Outcome.FP


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_outcomes(cls, outcomes) -> "ConfusionCounts":
        outcomes = list(outcomes)
        return cls(*(sum(o == k for o in outcomes) for k in (Outcome.TP, Outcome.TN, Outcome.FP, Outcome.FN)))


def f1(counts: ConfusionCounts) -> Optional[float]:
    """``TP / (TP + (FP + FN) / 2)``; ``None`` when there is nothing to score."""
    denom = counts.tp + 0.5 * (counts.fp + counts.fn)
    if denom == 0:
        return None
    return counts.tp / denom


def delay_and_ttfa(label: ChangeLabel, result: DetectionResult, length: int) -> tuple[Optional[int], int]:
    """Per-sequence ``(delay, time_to_false_alarm)``.

    Delay is defined for detected (``tau - theta``) and missed (``T - theta``)
    changes only.
    """
    outcome = classify_outcome(label, result)
    tau = result.first_alarm
    if outcome is Outcome.TP:
        return tau - label.theta, length
    if outcome is Outcome.FN:
        return length - label.theta, length
    if outcome is Outcome.FP:
        return None, tau
    return None, length


# -- partitions -----------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    segments: tuple[tuple[int, int], ...]

    def __post_init__(self):
        segs = tuple((int(a), int(b)) for a, b in self.segments)
        if not segs or segs[0][0] != 0 or any(a >= b for a, b in segs):
            raise ValueError(f"invalid partition {segs}")
        if any(segs[i][1] != segs[i + 1][0] for i in range(len(segs) - 1)):
            raise ValueError(f"segments must tile the range without gaps: {segs}")
        object.__setattr__(self, "segments", segs)

    @property
    def length(self) -> int:
        return self.segments[-1][1]

    @classmethod
    def from_change_points(cls, change_points, length: int) -> "Partition":
        cps = sorted({int(c) for c in change_points if 0 < c < length})
        bounds = [0, *cps, length]
        return cls(tuple(zip(bounds, bounds[1:])))


def covering(true: Partition, pred: Partition) -> float:
    """Length-weighted best Jaccard overlap of each true segment with a predicted one."""
    if true.length != pred.length:
        raise ValueError(f"partitions over different lengths: {true.length} vs {pred.length}")
    total = 0.0
    for a0, a1 in true.segments:
        best = 0.0
        for b0, b1 in pred.segments:
            inter = min(a1, b1) - max(a0, b0)
            if inter > 0:
                best = max(best, inter / (max(a1, b1) - min(a0, b0)))
        total += (a1 - a0) * best
    return total / true.length


def label_partition(label: ChangeLabel | MultiChangeLabel, length: int) -> Partition:
    if isinstance(label, MultiChangeLabel):
        return Partition.from_change_points(label.change_points, length)
    return Partition.from_change_points([label.theta] if label.is_change else [], length)


# -- aggregate evaluation ---------------------------------------------------------


@dataclass
class CurvePoint:
    threshold: float
    mean_dd: float
    mean_ttfa: float
    f1: Optional[float] = None
    covering: Optional[float] = None
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class DetectionCurve:
    points: list[CurvePoint]
    area: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "mean_dd", "mean_ttfa"])
            for pt in self.points:
                w.writerow([repr(pt.threshold), repr(pt.mean_dd), repr(pt.mean_ttfa)])


def curve_area(xy: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under ``y(x)``, points sorted by ``x`` with equal-``x`` points averaged."""
    groups: dict[float, list[float]] = {}
    for x, y in xy:
        groups.setdefault(float(x), []).append(float(y))
    xs = sorted(groups)
    ys = [float(np.mean(groups[x])) for x in xs]
    return float(sum((xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]) / 2.0 for i in range(len(xs) - 1)))


def summarize_first_alarms(first: Sequence[Optional[int]], labels: Sequence[ChangeLabel], length: int):
    """Counts, mean delay and mean time to false alarm for one set of first alarms."""
    outcomes, delays, ttfas = [], [], []
    for tau, lab in zip(first, labels):
        res = DetectionResult(() if tau is None else (tau,))
        outcome = classify_outcome(lab, res)
        dd, ttfa = delay_and_ttfa(lab, res, length)
        outcomes.append(outcome)
        ttfas.append(ttfa)
        if lab.is_change:
            delays.append(0 if dd is None else dd)
    counts = ConfusionCounts.from_outcomes(outcomes)
    mean_dd = float(np.mean(delays)) if delays else 0.0
    return counts, mean_dd, float(np.mean(ttfas))


def mean_covering(alarm_sets: Sequence[Sequence[int]], truths: Sequence[ChangeLabel | MultiChangeLabel],
                  length: int) -> float:
    return float(np.mean([
        covering(label_partition(t, length), Partition.from_change_points(a, length))
        for a, t in zip(alarm_sets, truths)
    ]))


def default_grid(n: int = 41) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def detection_curve(probs: np.ndarray, labels: Sequence[ChangeLabel], grid=None,
                    multi_labels: Optional[Sequence[MultiChangeLabel]] = None) -> DetectionCurve:
    """One (threshold, mean delay, mean time to false alarm) point per grid threshold.

    Also records F1 and covering per threshold.  With ``multi_labels`` the
    covering uses every up-crossing against all true changes.
    """
    probs = np.asarray(probs, dtype=np.float64)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("threshold grid must be non-empty and strictly increasing")
    length = probs.shape[1]
    firsts = first_crossings(probs, grid)
    points = []
    for k, s in enumerate(grid):
        first = [None if t < 0 else int(t) for t in firsts[k]]
        counts, mdd, mttfa = summarize_first_alarms(first, labels, length)
        if multi_labels is not None:
            rule = ThresholdRule(float(s), "all")
            cov = mean_covering([detect(p, rule).alarms for p in probs], multi_labels, length)
        else:
            cov = mean_covering([[] if t is None else [t] for t in first], labels, length)
        points.append(CurvePoint(float(s), mdd, mttfa, f1(counts), cov, **asdict(counts)))
    area = curve_area([(pt.mean_dd, pt.mean_ttfa) for pt in points])
    return DetectionCurve(points, area)


@dataclass
class MetricsReport:
    method: str
    n_sequences: int
    f1: Optional[float]
    mean_dd: float
    mean_ttfa: float
    covering: float
    max_covering: float
    auc: Optional[float]
    threshold: Optional[float] = None
    counts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def report_from_curve(method: str, curve: DetectionCurve, n: int, extra: Optional[dict] = None) -> MetricsReport:
    """Summarise a curve at its best-F1 threshold (ties go to the lowest threshold)."""
    scored = [pt for pt in curve.points if pt.f1 is not None]
    best = max(scored, key=lambda pt: pt.f1) if scored else curve.points[0]
    return MetricsReport(
        method=method,
        n_sequences=n,
        f1=best.f1,
        mean_dd=best.mean_dd,
        mean_ttfa=best.mean_ttfa,
        covering=best.covering,
        max_covering=max(pt.covering for pt in curve.points),
        auc=curve.area,
        threshold=best.threshold,
        counts={"tp": best.tp, "tn": best.tn, "fp": best.fp, "fn": best.fn},
        extra=dict(extra or {}),
    )


def evaluate_probabilities(method: str, probs: np.ndarray, labels: Sequence[ChangeLabel], grid=None,
                           multi_labels=None) -> tuple[MetricsReport, DetectionCurve]:
    curve = detection_curve(probs, labels, grid, multi_labels)
    return report_from_curve(method, curve, len(labels)), curve


def evaluate_change_sets(method: str, change_sets: Sequence[Sequence[int]], labels: Sequence[ChangeLabel],
                         length: int, multi_labels=None, extra: Optional[dict] = None) -> MetricsReport:
    """Score methods without a threshold; the first predicted change acts as the alarm."""
    first = [min(cs) if len(cs) else None for cs in change_sets]
    counts, mdd, mttfa = summarize_first_alarms(first, labels, length)
    truths = multi_labels if multi_labels is not None else labels
    cov = mean_covering(change_sets, truths, length)
    return MetricsReport(
        method=method, n_sequences=len(labels), f1=f1(counts), mean_dd=mdd, mean_ttfa=mttfa,
        covering=cov, max_covering=cov, auc=None, threshold=None, counts=asdict(counts), extra=dict(extra or {}),
    )
