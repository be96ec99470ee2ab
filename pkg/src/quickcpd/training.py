"""Minibatch training with Adam and validation early stopping.

Three regimes share one loop:

* ``indid`` -- the delay/false-alarm loss from scratch;
* ``bce`` -- per-step binary cross-entropy;
* ``bce_indid`` -- BCE first, then fine-tuning with the delay/false-alarm
  loss, each phase with its own early stopping.

Per-batch work is split into fixed-size chunks so that the reduction order
(and therefore every bit of the result) does not depend on the number of
worker threads.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .loss import LossConfig, bce_batch, combined_loss
from .recurrent import ModelParams, ModelSpec, backward, forward, init_params
from .types import ChangeLabel, Dataset

log = logging.getLogger(__name__)

Regime = Literal["indid", "bce", "bce_indid"]

CHUNK = 16


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    regime: Regime = "indid"
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.0
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    val_fraction: float = 0.2
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if self.regime not in ("indid", "bce", "bce_indid"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


# -- Adam ---------------------------------------------------------------------

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name!r}")
    step = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for name, w in params.items():
        g = grads[name]
        m = BETA1 * state.m[name] + (1.0 - BETA1) * g
        v = BETA2 * state.v[name] + (1.0 - BETA2) * g * g
        m_hat = m / (1.0 - BETA1**step)
        v_hat = v / (1.0 - BETA2**step)
        new_p[name] = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, step)


# -- loss plumbing ------------------------------------------------------------


def _loss_and_grad_p(kind: str, probs: np.ndarray, labels, loss_cfg: LossConfig):
    if not np.all(np.isfinite(probs)):
        raise TrainingDiverged("model produced non-finite probabilities")
    if kind == "bce":
        return bce_batch(probs, labels)
    lv = combined_loss(probs, labels, loss_cfg)
    return lv.total, lv.grad_p


def evaluate_loss(params: ModelParams, x: np.ndarray, labels, kind: str, loss_cfg: LossConfig) -> float:
    """Eval-mode loss over a whole split (no dropout)."""
    probs = np.concatenate([forward(params, x[i : i + CHUNK])[0] for i in range(0, len(x), CHUNK)])
    value, _ = _loss_and_grad_p(kind, probs, labels, loss_cfg)
    return float(value)


def batch_gradient(params: ModelParams, x: np.ndarray, labels, kind: str, loss_cfg: LossConfig,
                   masks: Optional[np.ndarray] = None, pool: Optional[ThreadPoolExecutor] = None):
    """Loss and parameter gradient for one minibatch."""
    starts = list(range(0, len(x), CHUNK))

    def fwd(s):
        m = None if masks is None else masks[s : s + CHUNK]
        return forward(params, x[s : s + CHUNK], training=True, dropout_mask=m)

    outs = list(pool.map(fwd, starts)) if pool else [fwd(s) for s in starts]
    probs = np.concatenate([o[0] for o in outs])
    value, grad_p = _loss_and_grad_p(kind, probs, labels, loss_cfg)

    def bwd(k):
        s = starts[k]
        return backward(params, outs[k][1], grad_p[s : s + CHUNK])

    parts = list(pool.map(bwd, range(len(starts)))) if pool else [bwd(k) for k in range(len(starts))]
    grads = parts[0]
    for part in parts[1:]:
        grads = {k: grads[k] + part[k] for k in grads}
    return float(value), grads


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


# -- training loop ------------------------------------------------------------


@dataclass
class TrainLog:
    seed: int
    records: list[dict] = field(default_factory=list)
    phases: list[dict] = field(default_factory=list)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(dict(rec, seed=self.seed), sort_keys=True) + "\n")
            for ph in self.phases:
                fh.write(json.dumps(dict(ph, seed=self.seed, summary=True), sort_keys=True) + "\n")

    def losses(self, phase: Optional[str] = None, key: str = "val_loss") -> list[float]:
        return [r[key] for r in self.records if phase is None or r["phase"] == phase]


def stratified_split(labels: list[ChangeLabel], val_fraction: float, rng: np.random.Generator):
    """Indices ``(train, val)`` with the change/no-change ratio kept in both parts."""
    train_idx, val_idx = [], []
    for flag in (True, False):
        group = np.array([i for i, lab in enumerate(labels) if lab.is_change == flag], dtype=np.int64)
        if group.size == 0:
            continue
        group = group[rng.permutation(group.size)]
        n_val = int(round(val_fraction * group.size))
        if group.size > 1:
            n_val = min(max(n_val, 1), group.size - 1)
        val_idx.extend(group[:n_val].tolist())
        train_idx.extend(group[n_val:].tolist())
    if not train_idx or not val_idx:
        raise ValueError("dataset too small for a train/validation split")
    return np.sort(train_idx), np.sort(val_idx)


def _run_phase(params: ModelParams, phase: str, kind: str, x_tr, y_tr, x_val, y_val,
               cfg: TrainConfig, rng: np.random.Generator, log_: TrainLog,
               pool: Optional[ThreadPoolExecutor]) -> ModelParams:
    state = AdamState.zeros(params.arrays)
    best, best_params, best_epoch, wait = None, params.copy(), 0, 0
    n = len(x_tr)
    spec = params.spec
    stopped = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            xb = x_tr[idx]
            yb = [y_tr[i] for i in idx]
            masks = None
            if spec.dropout > 0.0:
                keep = 1.0 - spec.dropout
                masks = (rng.random((len(idx), xb.shape[1], spec.hidden_dim)) < keep) / keep
            value, grads = batch_gradient(params, xb, yb, kind, cfg.loss, masks, pool)
            if not np.isfinite(value):
                raise TrainingDiverged(f"{phase}: non-finite training loss at epoch {epoch}")
            if cfg.clip_norm is not None:
                grads = _clip(grads, cfg.clip_norm)
            arrays, state = adam_step(params.arrays, grads, state, cfg.learning_rate)
            if not all(np.all(np.isfinite(a)) for a in arrays.values()):
                raise TrainingDiverged(f"{phase}: parameters overflowed at epoch {epoch}")
            params = ModelParams(spec, arrays)
            total += value * len(idx)
        val = evaluate_loss(params, x_val, y_val, kind, cfg.loss)
        if not np.isfinite(val):
            raise TrainingDiverged(f"{phase}: non-finite validation loss at epoch {epoch}")
        log_.records.append({
            "phase": phase, "epoch": epoch, "train_loss": total / n, "val_loss": val,
            "wall_ms": round(1000.0 * (time.perf_counter() - t0), 3),
        })
        log.debug("%s epoch %d train %.5f val %.5f", phase, epoch, total / n, val)
        if best is None or val < best - cfg.min_delta:
            best, best_params, best_epoch, wait = val, params.copy(), epoch, 0
        else:
            wait += 1
        stopped = epoch
        if wait >= cfg.patience:
            break
    log_.phases.append({"phase": phase, "best_epoch": best_epoch, "stopped_epoch": stopped,
                        "best_val_loss": best})
    return best_params


def train(dataset: Dataset, spec: ModelSpec, cfg: TrainConfig, threads: int = 1,
          init: Optional[ModelParams] = None) -> tuple[ModelParams, TrainLog]:
    """Fit a model on ``dataset``; returns the best-validation parameters and the log."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if spec.input_dim != dataset.dim:
        raise ValueError(f"model input_dim {spec.input_dim} != data dim {dataset.dim}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, split_rng, run_rng = (np.random.default_rng(s) for s in seeds)
    params = init.copy() if init is not None else init_params(spec, init_rng)
    log_ = TrainLog(seed=cfg.seed)
    if cfg.max_epochs == 0:
        return params, log_

    labels = dataset.labels
    x = dataset.stacked()
    tr, val = stratified_split(labels, cfg.val_fraction, split_rng)
    x_tr, y_tr = x[tr], [labels[i] for i in tr]
    x_val, y_val = x[val], [labels[i] for i in val]

    phases = {"indid": [("indid", "indid")], "bce": [("bce", "bce")],
              "bce_indid": [("bce", "bce"), ("indid", "indid")]}[cfg.regime]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for phase, kind in phases:
            params = _run_phase(params, phase, kind, x_tr, y_tr, x_val, y_val, cfg, run_rng, log_, pool)
    finally:
        if pool:
            pool.shutdown()
    return params, log_
