"""Delay / false-alarm loss over per-step change probabilities.

Under the probabilistic reading of a detector, it alarms at step ``t`` with
probability ``p[t]`` given no earlier alarm, so the first alarm after
``start`` is a stopping time ``tau`` with

    P(tau = t) = p[t] * prod_{k=start}^{t-1} (1 - p[k]).

Both halves of the loss are truncated expectations of that stopping time:

* delay part: ``E[min(tau - theta, h + 1 - theta)]`` over the window ``[theta, h]``;
* alarm part: ``E[min(tau, L)]`` over the change-free prefix ``[0, L-1]``.

Values and gradients come from a backward recursion
``A[t] = r[t] p[t] + (1 - p[t]) A[t+1]`` so no step ever divides by ``1 - p``;
exact zeros and ones in ``p`` are fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .types import ChangeLabel, label_arrays

HorizonMode = Literal["full", "absolute", "relative"]
RemainderSign = Literal["consistent", "main_text", "appendix"]

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """How the delay window is truncated and how the two parts are weighted.

    ``c=None`` selects the default multiplier ``h / (2T)``, with ``h`` the
    window length: ``H`` for relative horizons, ``T`` for the full horizon and
    the absolute index for absolute horizons.
    """

    horizon: HorizonMode = "full"
    horizon_value: Optional[int] = None
    c: Optional[float] = None
    remainder: RemainderSign = "consistent"

    def __post_init__(self):
        if self.horizon not in ("full", "absolute", "relative"):
            raise ValueError(f"unknown horizon mode {self.horizon!r}")
        if self.horizon == "full":
            if self.horizon_value is not None:
                raise ValueError("full horizon takes no horizon_value")
        elif self.horizon_value is None:
            raise ValueError(f"{self.horizon} horizon needs horizon_value")
        elif self.horizon == "relative" and self.horizon_value < 1:
            raise ValueError("relative horizon H must be >= 1")
        elif self.horizon == "absolute" and self.horizon_value < 0:
            raise ValueError("absolute horizon h must be >= 0")
        if self.c is not None and not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be a finite non-negative number, got {self.c}")
        if self.remainder not in ("consistent", "main_text", "appendix"):
            raise ValueError(f"unknown remainder convention {self.remainder!r}")

    def multiplier(self, length: int) -> float:
        if self.c is not None:
            return float(self.c)
        h = length if self.horizon == "full" else self.horizon_value
        return h / (2.0 * length)

    def horizon_end(self, theta: np.ndarray, length: int) -> np.ndarray:
        """Inclusive last index of the delay window for each change index."""
        theta = np.asarray(theta)
        if self.horizon == "full":
            h = np.full_like(theta, length - 1)
        elif self.horizon == "relative":
            h = np.minimum(theta + self.horizon_value - 1, length - 1)
        else:
            # window keeps at least the step at theta
            h = np.maximum(np.minimum(self.horizon_value, length - 1), theta)
        return h


@dataclass
class LossValue:
    total: float
    delay_part: float
    alarm_part: float
    grad_p: np.ndarray
    c: float
    meta: dict = field(default_factory=dict)


# -- window expectation kernel ---------------------------------------------


def _window_terms(p: np.ndarray, start: np.ndarray, end: np.ndarray):
    """Sum and survival terms of a truncated stopping-time expectation.

    For each row ``i`` with window ``[start_i, end_i]`` returns

        head_i = sum_{t=start}^{end} (t - start) p_t prod_{k=start}^{t-1} q_k
        surv_i = prod_{k=start}^{end} q_k          (q = 1 - p)

    and their gradients w.r.t. ``p`` (zero outside the window).  An empty
    window (``end < start``) gives ``head = 0, surv = 1``.
    """
    n, length = p.shape
    q = 1.0 - p
    steps = np.arange(length)
    in_win = (steps[None, :] >= start[:, None]) & (steps[None, :] <= end[:, None])
    q_w = np.where(in_win, q, 1.0)
    p_w = np.where(in_win, p, 0.0)
    r = (steps[None, :] - start[:, None]).astype(np.float64)

    # survival up to (excluding) t, restarted at start
    before = np.ones((n, length))
    if length > 1:
        before[:, 1:] = np.cumprod(q_w[:, :-1], axis=1)

    head_next = np.zeros((n, length))
    surv_next = np.ones((n, length))
    a = np.zeros(n)
    u = np.ones(n)
    for t in range(length - 1, -1, -1):
        head_next[:, t] = a
        surv_next[:, t] = u
        a = r[:, t] * p_w[:, t] + q_w[:, t] * a
        u = q_w[:, t] * u
    d_head = np.where(in_win, before * (r - head_next), 0.0)
    d_surv = np.where(in_win, -before * surv_next, 0.0)
    return a, u, d_head, d_surv


def truncated_expectation(p, start, end):
    """``E[min(tau - start, end + 1 - start)]`` per row and its gradient."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    start = np.atleast_1d(np.asarray(start))
    end = np.atleast_1d(np.asarray(end))
    head, surv, d_head, d_surv = _window_terms(p, start, end)
    cap = np.maximum(end + 1 - start, 0).astype(np.float64)
    return head + cap * surv, d_head + cap[:, None] * d_surv


def _check_probs(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability series must be a non-empty 1-D array")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def delay_loss(p, theta: int, h: int) -> float:
    """Expected detection delay truncated at horizon index ``h``."""
    p = _check_probs(p)
    if not 0 <= theta <= h <= p.size - 1:
        raise ValueError(f"need 0 <= theta <= h <= T-1, got theta={theta}, h={h}, T={p.size}")
    value, _ = truncated_expectation(p[None, :], [theta], [h])
    return float(value[0])


def alarm_time_bound(p, prefix_len: int, remainder: RemainderSign = "consistent") -> float:
    """Truncated expected alarm time over the first ``prefix_len`` steps.

    ``remainder="consistent"`` gives ``E[min(tau, L)]``.  The two literal
    variants keep the expected-sum head but flip the survival term's sign
    (``main_text``) or additionally negate the whole expression (``appendix``).
    """
    p = _check_probs(p)
    if not 1 <= prefix_len <= p.size:
        raise ValueError(f"prefix length must be in [1, {p.size}], got {prefix_len}")
    value, _ = _alarm_terms(p[None, :], np.array([prefix_len]), remainder)
    return float(value[0])


def _alarm_terms(p: np.ndarray, prefix_len: np.ndarray, remainder: RemainderSign):
    start = np.zeros_like(prefix_len)
    head, surv, d_head, d_surv = _window_terms(p, start, prefix_len - 1)
    cap = prefix_len.astype(np.float64)
    empty = prefix_len == 0
    surv = np.where(empty, 0.0, surv)
    if remainder == "consistent":
        return head + cap * surv, d_head + cap[:, None] * d_surv
    value = head - cap * surv
    grad = d_head - cap[:, None] * d_surv
    if remainder == "appendix":
        return -value, -grad
    return value, grad


# -- batch losses ------------------------------------------------------------


def _as_batch(probs) -> tuple[np.ndarray, np.ndarray]:
    """Pad a list of series into ``(N, T_max)``; returns the matrix and row lengths."""
    if isinstance(probs, np.ndarray) and probs.ndim == 2:
        p = np.asarray(probs, dtype=np.float64)
        return p, np.full(p.shape[0], p.shape[1])
    rows = [np.asarray(r, dtype=np.float64) for r in probs]
    if not rows:
        raise ValueError("empty batch")
    lengths = np.array([r.size for r in rows])
    p = np.zeros((len(rows), lengths.max()))
    for i, r in enumerate(rows):
        p[i, : r.size] = r
    return p, lengths


def combined_loss(probs, labels: Sequence[ChangeLabel], cfg: LossConfig = LossConfig()) -> LossValue:
    """Delay part minus ``c`` times alarm part, averaged over a batch.

    Each part is averaged over the sequences that contribute to it: the
    delay part over sequences with a change, the alarm part over sequences
    with a non-empty change-free prefix (``theta > 0`` or no change).
    """
    p, lengths = _as_batch(probs)
    n, length = p.shape
    if n == 0:
        raise ValueError("empty batch")
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} series")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    has, theta = label_arrays(labels, length)
    theta = np.where(has, theta, lengths)
    if np.any(has & (theta > lengths - 1)):
        raise ValueError("change index beyond sequence end")

    c = cfg.multiplier(length)
    grad = np.zeros_like(p)

    delay_part = 0.0
    n_delay = int(has.sum())
    if n_delay:
        rows = np.flatnonzero(has)
        h_end = np.array([cfg.horizon_end(np.array([theta[i]]), lengths[i])[0] for i in rows])
        values, g = truncated_expectation(p[rows], theta[rows], h_end)
        delay_part = float(values.sum() / n_delay)
        grad[rows] += g / n_delay

    prefix = np.where(has, theta, lengths)
    alarm_rows = np.flatnonzero(prefix > 0)
    alarm_part = 0.0
    if alarm_rows.size:
        values, g = _alarm_terms(p[alarm_rows], prefix[alarm_rows], cfg.remainder)
        alarm_part = float(values.sum() / alarm_rows.size)
        grad[alarm_rows] -= c * g / alarm_rows.size

    meta = {"c": c, "horizon": cfg.horizon, "horizon_value": cfg.horizon_value,
            "n_delay": n_delay, "n_alarm": int(alarm_rows.size)}
    if not isinstance(probs, np.ndarray):
        grad = [grad[i, : lengths[i]] for i in range(n)]
    return LossValue(delay_part - c * alarm_part, delay_part, alarm_part, grad, c, meta)


def bce_targets(labels: Sequence[ChangeLabel], length: int) -> np.ndarray:
    has, theta = label_arrays(labels, length)
    steps = np.arange(length)
    return (has[:, None] & (steps[None, :] >= theta[:, None])).astype(np.float64)


def bce_batch(p: np.ndarray, labels: Sequence[ChangeLabel], eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    """Per-step binary cross-entropy, averaged over steps then over the batch."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    n, length = p.shape
    y = bce_targets(labels, length)
    pc = np.clip(p, eps, 1.0 - eps)
    per_seq = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).mean(axis=1)
    inside = (p > eps) & (p < 1.0 - eps)
    grad = np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0) / (length * n)
    return float(per_seq.mean()), grad


def bce_loss(p, label: ChangeLabel, eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    p = _check_probs(p)
    value, grad = bce_batch(p[None, :], [label], eps)
    return value, grad[0]


# -- independent oracle -----------------------------------------------------


def stopping_time_oracle(p, start: int, cap: int) -> np.ndarray:
    """Distribution of the first alarm at or after ``start``, capped at ``cap`` steps.

    Entry ``k < cap`` is ``P(tau = start + k)``; the last entry is the
    probability of no alarm within ``cap`` steps.  Computed term by term
    from the product formula.
    """
    p = [float(v) for v in p]
    if not (0 <= start and cap >= 0 and start + cap <= len(p)):
        raise ValueError(f"window start={start}, cap={cap} does not fit a series of length {len(p)}")
    dist = []
    for t in range(start, start + cap):
        dist.append(p[t] * math.prod(1.0 - p[k] for k in range(start, t)))
    dist.append(math.prod(1.0 - p[k] for k in range(start, start + cap)))
    return np.array(dist)


def oracle_expectation(dist: np.ndarray) -> float:
    """``E[min(tau - start, cap)]`` from an oracle distribution."""
    cap = len(dist) - 1
    return float(sum(k * dist[k] for k in range(cap)) + cap * dist[cap])
