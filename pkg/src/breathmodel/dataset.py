"""Breathing-vector containers shared by the pipeline stages."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import SchemaError, StratificationError

TUPLE_FIELDS = ("A_EE", "D_EE", "A_MI", "A_EI", "D_EI", "A_ME")
AMPLITUDE_COLUMNS = (0, 2, 3, 5)
TIME_COLUMNS = (1, 4)


class PeriodTuple(NamedTuple):
    """One breathing period: four knot amplitudes (mm) and the inhale/exhale durations (s)."""

    A_EE: float
    D_EE: float
    A_MI: float
    A_EI: float
    D_EI: float
    A_ME: float


@dataclass
class BreathingVector:
    periods: np.ndarray  # (N_T, 6)
    label: int | None = None
    source_id: str = ""

    @property
    def n_t(self) -> int:
        return len(self.periods)

    def tuples(self) -> list[PeriodTuple]:
        return [PeriodTuple(*map(float, row)) for row in self.periods]


@dataclass
class LabeledDataset:
    """``x`` has shape (n, N_T, 6); ``labels`` uses -1 for unlabeled samples."""

    x: np.ndarray
    labels: np.ndarray
    source_ids: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 3 or self.x.shape[2] != 6:
            raise SchemaError(f"dataset x must have shape (n, N_T, 6), got {self.x.shape}")
        n = len(self.x)
        self.labels = np.full(n, -1, dtype=np.int64) if self.labels is None else np.asarray(self.labels, dtype=np.int64)
        if self.source_ids is None:
            self.source_ids = np.array([str(i) for i in range(n)])
        self.source_ids = np.asarray(self.source_ids, dtype=str)
        if len(self.labels) != n or len(self.source_ids) != n:
            raise SchemaError("labels and source_ids must match the number of samples")

    def __len__(self):
        return len(self.x)

    @property
    def n_t(self) -> int:
        return self.x.shape[1]

    @property
    def num_classes(self) -> int:
        names = self.meta.get("class_names")
        if names:
            return len(names)
        return int(self.labels.max()) + 1 if (self.labels >= 0).any() else 0

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.x[idx], self.labels[idx], self.source_ids[idx], dict(self.meta))

    def vectors(self) -> list[BreathingVector]:
        return [BreathingVector(self.x[i], int(self.labels[i]) if self.labels[i] >= 0 else None,
                                str(self.source_ids[i])) for i in range(len(self))]

    @classmethod
    def from_vectors(cls, vectors, meta=None) -> "LabeledDataset":
        x = np.stack([np.asarray(v.periods, dtype=np.float64) for v in vectors])
        labels = np.array([-1 if v.label is None else v.label for v in vectors], dtype=np.int64)
        return cls(x, labels, np.array([v.source_id for v in vectors]), dict(meta or {}))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(self.labels.tobytes())
        h.update("\n".join(self.source_ids.tolist()).encode())
        return h.hexdigest()


def split_indices(n: int, fractions, rng: np.random.Generator):
    """Shuffle ``range(n)`` and cut it into consecutive parts of the given fractions (last part takes the rest)."""
    perm = rng.permutation(n)
    out, start = [], 0
    for f in fractions[:-1]:
        k = int(round(f * n))
        out.append(np.sort(perm[start : start + k]))
        start += k
    out.append(np.sort(perm[start:]))
    return out


def stratified_label_subset(labels: np.ndarray, n_labels: int, rng: np.random.Generator,
                            num_classes: int | None = None) -> np.ndarray:
    """Pick ``n_labels`` indices with (as near as possible) equal counts per class."""
    labels = np.asarray(labels)
    classes = np.arange(num_classes) if num_classes else np.unique(labels[labels >= 0])
    if n_labels < len(classes):
        raise StratificationError(f"{n_labels} labels cannot cover {len(classes)} classes")
    base, extra = divmod(n_labels, len(classes))
    chosen = []
    for k, c in enumerate(classes):
        pool = np.flatnonzero(labels == c)
        want = base + (1 if k < extra else 0)
        if len(pool) == 0:
            raise StratificationError(f"class {int(c)} has no samples to label")
        if len(pool) < want:
            raise StratificationError(f"class {int(c)} has only {len(pool)} samples, {want} requested")
        chosen.append(rng.choice(pool, size=want, replace=False))
    return np.sort(np.concatenate(chosen))
