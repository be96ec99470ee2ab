"""Synthetic Gaussian mean-shift sequences with one or several change points."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Optional

import numpy as np

from .types import ChangeLabel, Dataset, LabeledSequence, MultiChangeLabel

MIN_GAP = 2


@dataclass(frozen=True)
class GeneratorSpec:
    dim: int = 1
    length: int = 128
    n_train: int = 700
    n_test: int = 300
    change_fraction_train: float = 0.489
    change_fraction_test: float = 0.527
    pre_mean: float = 1.0
    post_mean_range: tuple[float, float] = (2.0, 100.0)
    variance: float = 1.0
    multi: bool = False
    n_changes_range: tuple[int, int] = (0, 9)
    segment_means: Literal["alternate", "redraw"] = "alternate"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "post_mean_range", tuple(float(v) for v in self.post_mean_range))
        object.__setattr__(self, "n_changes_range", tuple(int(v) for v in self.n_changes_range))
        self.validate()

    def validate(self) -> None:
        lo, hi = self.post_mean_range
        checks = [
            (self.dim >= 1, "dim", "must be >= 1"),
            (self.length >= 2, "length", "must be >= 2"),
            (self.n_train >= 0 and self.n_test >= 0, "n_train/n_test", "must be >= 0"),
            (0.0 <= self.change_fraction_train <= 1.0, "change_fraction_train", "must be in [0, 1]"),
            (0.0 <= self.change_fraction_test <= 1.0, "change_fraction_test", "must be in [0, 1]"),
            (lo > self.pre_mean, "post_mean_range", f"lower end {lo} must exceed pre_mean {self.pre_mean}"),
            (hi >= lo, "post_mean_range", "must satisfy lo <= hi"),
            (self.variance > 0.0, "variance", "must be positive"),
            (0 <= self.n_changes_range[0] <= self.n_changes_range[1], "n_changes_range", "must satisfy 0 <= min <= max"),
            (self.segment_means in ("alternate", "redraw"), "segment_means", "must be 'alternate' or 'redraw'"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ValueError(f"{name}: {msg}")
        if self.multi and (self.n_changes_range[1] + 1) * MIN_GAP > self.length:
            raise ValueError(
                f"n_changes_range: {self.n_changes_range[1]} changes need length >= "
                f"{(self.n_changes_range[1] + 1) * MIN_GAP}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["post_mean_range"] = list(self.post_mean_range)
        d["n_changes_range"] = list(self.n_changes_range)
        return d


def _segment(rng, mean: float, n: int, spec: GeneratorSpec) -> np.ndarray:
    return rng.normal(mean, np.sqrt(spec.variance), size=(n, spec.dim))


def _change_flags(rng, n: int, fraction: float) -> np.ndarray:
    flags = np.zeros(n, dtype=bool)
    flags[: int(round(fraction * n))] = True
    return flags[rng.permutation(n)]


def generate_single_change(spec: GeneratorSpec, split: str, n: int, fraction: float,
                           rng: np.random.Generator) -> Dataset:
    """``n`` sequences, ``round(fraction * n)`` of them with one mean shift."""
    T = spec.length
    lo, hi = spec.post_mean_range
    seqs = []
    for i, has in enumerate(_change_flags(rng, n, fraction)):
        if has:
            theta = int(rng.integers(1, T))
            mu = float(rng.uniform(lo, hi))
            obs = np.concatenate([_segment(rng, spec.pre_mean, theta, spec), _segment(rng, mu, T - theta, spec)])
            label = ChangeLabel.change(theta)
        else:
            obs = _segment(rng, spec.pre_mean, T, spec)
            label = ChangeLabel.no_change()
        seqs.append(LabeledSequence(f"{split}-{i:05d}", obs, label))
    return Dataset(tuple(seqs), {"generator": spec.to_dict(), "split": split})


def sample_change_points(rng: np.random.Generator, length: int, k: int, gap: int = MIN_GAP) -> tuple[int, ...]:
    """``k`` sorted change indices with every segment at least ``gap`` long."""
    free = length - (k + 1) * gap
    if free < 0:
        raise ValueError(f"cannot place {k} changes with minimum gap {gap} in length {length}")
    # uniform multiset of size k from {0..free} via distinct draws from {0..free+k-1}
    picks = np.sort(rng.choice(free + k, size=k, replace=False)) - np.arange(k) if k else np.array([], int)
    return tuple(int(u + (j + 1) * gap) for j, u in enumerate(picks))


def generate_multi_change(spec: GeneratorSpec, split: str, n: int,
                          rng: np.random.Generator) -> Dataset:
    """Sequences with ``k ~ U{min..max}`` changes; labels carry every change index."""
    T = spec.length
    lo, hi = spec.post_mean_range
    kmin, kmax = spec.n_changes_range
    seqs = []
    for i in range(n):
        k = int(rng.integers(kmin, kmax + 1))
        cps = sample_change_points(rng, T, k)
        bounds = (0,) + cps + (T,)
        parts = []
        for j in range(k + 1):
            if j == 0 or (spec.segment_means == "alternate" and j % 2 == 0):
                mu = spec.pre_mean
            else:
                mu = float(rng.uniform(lo, hi))
            parts.append(_segment(rng, mu, bounds[j + 1] - bounds[j], spec))
        multi = MultiChangeLabel(cps)
        seqs.append(LabeledSequence(f"{split}-{i:05d}", np.concatenate(parts), multi.first(), multi))
    return Dataset(tuple(seqs), {"generator": spec.to_dict(), "split": split})


def generate(spec: GeneratorSpec) -> dict[str, Dataset]:
    """Train and test splits from independent random substreams of ``spec.seed``."""
    train_ss, test_ss = np.random.SeedSequence(spec.seed).spawn(2)
    out = {}
    for split, ss, n, frac in (("train", train_ss, spec.n_train, spec.change_fraction_train),
                               ("test", test_ss, spec.n_test, spec.change_fraction_test)):
        rng = np.random.default_rng(ss)
        if spec.multi:
            out[split] = generate_multi_change(spec, split, n, rng)
        else:
            out[split] = generate_single_change(spec, split, n, frac, rng)
        out[split].metadata["seed"] = spec.seed
    return out
