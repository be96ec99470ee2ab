"""Domain types shared across the package and the on-disk dataset format.

Time is 0-based throughout: a sequence of length ``T`` has indices ``0..T-1``.
"No change" is an explicit label state, never a sentinel index.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass(frozen=True)
class ChangeLabel:
    theta: Optional[int] = None

    @classmethod
    def change(cls, theta: int) -> "ChangeLabel":
        if theta < 0:
            raise ValueError(f"change index must be non-negative, got {theta}")
        return cls(int(theta))

    @classmethod
    def no_change(cls) -> "ChangeLabel":
        return cls(None)

    @property
    def is_change(self) -> bool:
        return self.theta is not None

    def __str__(self) -> str:
        return "inf" if self.theta is None else str(self.theta)

    @classmethod
    def parse(cls, text: str) -> "ChangeLabel":
        text = text.strip()
        if text == "inf":
            return cls.no_change()
        return cls.change(int(text))


@dataclass(frozen=True)
class MultiChangeLabel:
    change_points: tuple[int, ...] = ()

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"change points must be strictly increasing: {cps}")
        if cps and cps[0] < 0:
            raise ValueError("change points must be non-negative")
        object.__setattr__(self, "change_points", cps)

    def validate(self, length: int) -> None:
        if self.change_points and self.change_points[-1] > length - 1:
            raise ValueError(f"change point {self.change_points[-1]} outside [0, {length - 1}]")

    def first(self) -> ChangeLabel:
        return ChangeLabel.change(self.change_points[0]) if self.change_points else ChangeLabel.no_change()


@dataclass(frozen=True)
class LabeledSequence:
    id: str
    observations: np.ndarray
    label: ChangeLabel
    multi_label: Optional[MultiChangeLabel] = None

    def __post_init__(self):
        obs = np.array(self.observations, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2 or obs.shape[0] < 1 or obs.shape[1] < 1:
            raise DataError(f"sequence {self.id!r}: observations must be a non-empty T x D matrix")
        if not np.all(np.isfinite(obs)):
            raise DataError(f"sequence {self.id!r}: non-finite observation")
        if self.label.is_change and self.label.theta > obs.shape[0] - 1:
            raise DataError(f"sequence {self.id!r}: change index {self.label.theta} beyond T-1={obs.shape[0] - 1}")
        if self.multi_label is not None:
            self.multi_label.validate(obs.shape[0])
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def dim(self) -> int:
        return self.observations.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledSequence):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.multi_label == other.multi_label
            and self.observations.shape == other.observations.shape
            and np.array_equal(self.observations, other.observations)
        )


def prefix_restrict(seq: LabeledSequence, t: int) -> LabeledSequence:
    """Truncate ``seq`` to ``observations[0..t]``; a change after ``t`` is not yet visible."""
    if not 0 <= t <= seq.length - 1:
        raise IndexError(f"prefix end {t} outside [0, {seq.length - 1}]")
    label = seq.label if seq.label.is_change and seq.label.theta <= t else ChangeLabel.no_change()
    multi = None
    if seq.multi_label is not None:
        multi = MultiChangeLabel(tuple(c for c in seq.multi_label.change_points if c <= t))
    return LabeledSequence(seq.id, seq.observations[: t + 1], label, multi)


@dataclass(frozen=True)
class DetectionResult:
    alarms: tuple[int, ...] = ()

    def __post_init__(self):
        alarms = tuple(sorted(int(a) for a in self.alarms))
        object.__setattr__(self, "alarms", alarms)

    @property
    def first_alarm(self) -> Optional[int]:
        return self.alarms[0] if self.alarms else None


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[LabeledSequence, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        seqs = tuple(self.sequences)
        if seqs and len({s.dim for s in seqs}) != 1:
            raise DataError("all sequences in a dataset must share the observation dimension")
        object.__setattr__(self, "sequences", seqs)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def dim(self) -> int:
        return self.sequences[0].dim

    @property
    def labels(self) -> list[ChangeLabel]:
        return [s.label for s in self.sequences]

    @property
    def has_multi(self) -> bool:
        return bool(self.sequences) and all(s.multi_label is not None for s in self.sequences)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.sequences[i] for i in indices), dict(self.metadata))

    def stacked(self) -> np.ndarray:
        """Observations as an ``(N, T, D)`` array; requires uniform length."""
        lengths = {s.length for s in self.sequences}
        if len(lengths) != 1:
            raise DataError("stacked() needs sequences of equal length")
        return np.stack([s.observations for s in self.sequences])


# -- dataset directory format ----------------------------------------------

DATA_FILE = "data.csv"
LABELS_FILE = "labels.csv"
MULTI_FILE = "labels_multi.csv"
META_FILE = "meta.json"


def write_split(dataset: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    d = dataset.dim if dataset.sequences else 1
    # repr() round-trips float64 exactly
    with open(directory / DATA_FILE, "w", newline="") as fh:
        fh.write(",".join(["seq_id", "t"] + [f"x{j}" for j in range(d)]) + "\n")
        for seq in sorted(dataset.sequences, key=lambda s: s.id):
            for t, row in enumerate(seq.observations.tolist()):
                fh.write(f"{seq.id},{t}," + ",".join(map(repr, row)) + "\n")
    with open(directory / LABELS_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq_id", "theta"])
        for seq in sorted(dataset.sequences, key=lambda s: s.id):
            w.writerow([seq.id, str(seq.label)])
    if dataset.has_multi:
        with open(directory / MULTI_FILE, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seq_id", "theta_list"])
            for seq in sorted(dataset.sequences, key=lambda s: s.id):
                w.writerow([seq.id, ";".join(map(str, seq.multi_label.change_points))])
    with open(directory / META_FILE, "w") as fh:
        json.dump(dataset.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_split(directory: str | Path) -> Dataset:
    directory = Path(directory)
    if not (directory / DATA_FILE).exists() or not (directory / LABELS_FILE).exists():
        raise DataError(f"{directory} is not a dataset split (missing {DATA_FILE} or {LABELS_FILE})")

    rows: dict[str, list[list[float]]] = {}
    with open(directory / DATA_FILE, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["seq_id", "t"]:
            raise DataError(f"bad data header {header[:2]}")
        for rec in reader:
            sid, t = rec[0], int(rec[1])
            obs = rows.setdefault(sid, [])
            if t != len(obs):
                raise DataError(f"sequence {sid!r}: rows not sorted by t (got t={t})")
            obs.append([float(v) for v in rec[2:]])

    labels: dict[str, ChangeLabel] = {}
    with open(directory / LABELS_FILE, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            labels[rec["seq_id"]] = ChangeLabel.parse(rec["theta"])

    multi: dict[str, MultiChangeLabel] = {}
    if (directory / MULTI_FILE).exists():
        with open(directory / MULTI_FILE, newline="") as fh:
            for rec in csv.DictReader(fh):
                txt = rec["theta_list"].strip()
                cps = tuple(int(c) for c in txt.split(";")) if txt else ()
                multi[rec["seq_id"]] = MultiChangeLabel(cps)

    if set(rows) != set(labels):
        raise DataError("data.csv and labels.csv list different sequence ids")
    meta: dict[str, Any] = {}
    if (directory / META_FILE).exists():
        meta = json.loads((directory / META_FILE).read_text())

    seqs = tuple(
        LabeledSequence(sid, np.array(rows[sid]), labels[sid], multi.get(sid))
        for sid in sorted(rows)
    )
    return Dataset(seqs, meta)


def label_arrays(labels: Sequence[ChangeLabel], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised view of labels: ``(has_change, theta)`` with ``theta=length`` for no change."""
    has = np.array([lab.is_change for lab in labels], dtype=bool)
    theta = np.array([lab.theta if lab.is_change else length for lab in labels], dtype=np.int64)
    return has, theta
