"""End-to-end pipelines shared by the CLI, the scripts and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detect import CusumSpec, cusum_detect
from .loss import LossConfig, combined_loss
from .metrics import (
    MetricsReport,
    evaluate_change_sets,
    evaluate_probabilities,
    default_grid,
)
from .offline import SegmentationSpec, segment
from .recurrent import ModelParams, ModelSpec, predict
from .training import TrainConfig, train
from .types import DataError, Dataset, read_split


def load_splits(data_dir: str | Path, names: Sequence[str] = ("train", "test")) -> dict[str, Dataset]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    return {name: read_split(data_dir / name) for name in names}


def multi_labels_of(dataset: Dataset):
    return [s.multi_label for s in dataset] if dataset.has_multi else None


def evaluate_model(params: ModelParams, dataset: Dataset, grid=None, method: str = "model",
                   timing: bool = False) -> tuple[MetricsReport, object]:
    x = dataset.stacked()
    t0 = time.perf_counter()
    probs = predict(params, x)
    elapsed = time.perf_counter() - t0
    report, curve = evaluate_probabilities(method, probs, dataset.labels, grid, multi_labels_of(dataset))
    if timing:
        report.extra["inference_ms_per_sequence"] = 1000.0 * elapsed / len(dataset)
    return report, curve


def oracle_probabilities(dataset: Dataset) -> np.ndarray:
    """``p_t = 1[t >= theta]`` from the single-change labels: a detector that knows the answer."""
    length = dataset.sequences[0].length
    steps = np.arange(length)
    return np.array([
        (steps >= seq.label.theta).astype(np.float64) if seq.label.is_change else np.zeros(length)
        for seq in dataset
    ])


# -- offline baselines ------------------------------------------------------------


def _change_sets(dataset: Dataset, spec: SegmentationSpec) -> list[tuple[int, ...]]:
    return [segment(seq.observations, spec).change_points for seq in dataset]


def tune_offline(method: str, train_ds: Dataset, penalties, min_segment_len: int = 1) -> tuple[float, list]:
    """Penalty with the best training F1 (ties go to the larger penalty)."""
    length = train_ds.sequences[0].length
    scores = []
    for pen in penalties:
        spec = SegmentationSpec(method, penalty=float(pen), min_segment_len=min_segment_len)
        rep = evaluate_change_sets(method, _change_sets(train_ds, spec), train_ds.labels, length)
        scores.append((float(pen), rep.f1 if rep.f1 is not None else -1.0))
    best = max(scores, key=lambda s: (s[1], s[0]))[0]
    return best, scores


def evaluate_offline(method: str, penalty: float, dataset: Dataset, min_segment_len: int = 1,
                     extra: Optional[dict] = None, timing: bool = False) -> MetricsReport:
    spec = SegmentationSpec(method, penalty=penalty, min_segment_len=min_segment_len)
    t0 = time.perf_counter()
    sets = _change_sets(dataset, spec)
    elapsed = time.perf_counter() - t0
    extra = dict(extra or {}, penalty=penalty)
    if timing:
        extra["inference_ms_per_sequence"] = 1000.0 * elapsed / len(dataset)
    return evaluate_change_sets(method, sets, dataset.labels, dataset.sequences[0].length,
                                multi_labels_of(dataset), extra)


# -- CUSUM --------------------------------------------------------------------------


def _cusum_sets(dataset: Dataset, spec: CusumSpec):
    return [cusum_detect(seq.observations, spec).alarms for seq in dataset]


def tune_cusum(train_ds: Dataset, base: CusumSpec, limits) -> tuple[float, list]:
    """Decision limit with the best training F1 (ties go to the larger limit)."""
    length = train_ds.sequences[0].length
    scores = []
    for lim in limits:
        spec = replace(base, decision_limit=float(lim))
        rep = evaluate_change_sets("cusum", _cusum_sets(train_ds, spec), train_ds.labels, length)
        scores.append((float(lim), rep.f1 if rep.f1 is not None else -1.0))
    best = max(scores, key=lambda s: (s[1], s[0]))[0]
    return best, scores


def evaluate_cusum(spec: CusumSpec, dataset: Dataset, extra: Optional[dict] = None) -> MetricsReport:
    extra = dict(extra or {}, decision_limit=spec.decision_limit)
    return evaluate_change_sets("cusum", _cusum_sets(dataset, spec), dataset.labels,
                                dataset.sequences[0].length, multi_labels_of(dataset), extra)


# -- horizon ablation ---------------------------------------------------------------


@dataclass
class AblationRow:
    horizon: int
    f1: Optional[float]
    auc: float
    mean_dd: float
    mean_ttfa: float
    max_covering: float
    best_val_loss: float
    loss_gap: float


def loss_gaps(probs: np.ndarray, labels, horizons: Sequence[int], c: float) -> tuple[float, list[float]]:
    """Full-horizon loss minus the relative-``H`` loss at a fixed multiplier ``c``."""
    full = combined_loss(probs, labels, LossConfig("full", c=c)).total
    gaps = [full - combined_loss(probs, labels, LossConfig("relative", int(h), c=c)).total for h in horizons]
    return full, gaps


def horizon_ablation(train_ds: Dataset, test_ds: Dataset, spec: ModelSpec, base: TrainConfig,
                     horizons: Sequence[int], grid=None, threads: int = 1):
    """Train one model per relative horizon ``H`` and one with the full horizon.

    The loss-gap column evaluates the full-horizon model's test probabilities
    under each truncation with ``c`` held at the full-horizon value, which
    isolates the effect of dropping delay terms.
    """
    grid = default_grid() if grid is None else grid
    full_cfg = replace(base, regime="indid", loss=replace(base.loss, horizon="full", horizon_value=None))
    full_params, full_log = train(train_ds, spec, full_cfg, threads=threads)
    full_report, _ = evaluate_model(full_params, test_ds, grid, "indid-full")
    probs = predict(full_params, test_ds.stacked())
    length = probs.shape[1]
    c_full = full_cfg.loss.multiplier(length)
    full_loss, gaps = loss_gaps(probs, test_ds.labels, horizons, c_full)

    rows = []
    for h, gap in zip(horizons, gaps):
        cfg = replace(base, regime="indid", loss=replace(base.loss, horizon="relative", horizon_value=int(h)))
        params, log_ = train(train_ds, spec, cfg, threads=threads)
        rep, _ = evaluate_model(params, test_ds, grid, f"indid-H{h}")
        rows.append(AblationRow(int(h), rep.f1, rep.auc, rep.mean_dd, rep.mean_ttfa, rep.max_covering,
                                log_.phases[-1]["best_val_loss"], gap))
    full_report.extra.update(full_loss=full_loss, c=c_full, best_val_loss=full_log.phases[-1]["best_val_loss"])
    return rows, full_report
