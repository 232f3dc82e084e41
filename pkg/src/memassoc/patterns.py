"""Pattern containers shared by every module."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class PatternKind(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


def infer_kind(values: np.ndarray) -> PatternKind:
    values = np.asarray(values)
    if values.size and np.all(np.abs(values) == 1.0):
        return PatternKind.BINARY
    return PatternKind.CONTINUOUS


def check_values(values: np.ndarray, kind: PatternKind) -> None:
    if values.size == 0 or values.shape[-1] == 0:
        raise ValueError("patterns must have length N > 0")
    if not np.all(np.isfinite(values)):
        raise ValueError("pattern values must be finite")
    if kind is PatternKind.BINARY:
        if not np.all(np.abs(values) == 1.0):
            raise ValueError("binary patterns must contain only -1 and +1")
    elif np.any(np.abs(values) >= 1.0):
        raise ValueError("continuous patterns must lie strictly inside (-1, 1)")


@dataclass(frozen=True)
class Pattern:
    """A single network state or stored memory."""

    values: np.ndarray
    kind: PatternKind

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"pattern must be 1-D, got shape {values.shape}")
        check_values(values, PatternKind(self.kind))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", PatternKind(self.kind))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PatternSet:
    """M stored patterns of length N, one per row."""

    values: np.ndarray
    kind: PatternKind
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and values.size == 0:
            raise ValueError("an empty PatternSet needs an explicit (0, N) shape")
        if values.ndim != 2:
            raise ValueError(f"pattern set must be 2-D (M, N), got shape {values.shape}")
        if values.shape[1] == 0:
            raise ValueError("patterns must have length N > 0")
        if values.shape[0]:
            check_values(values, PatternKind(self.kind))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", PatternKind(self.kind))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (values.shape[0],):
                raise ValueError("labels must have one entry per pattern")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, n: int, kind: PatternKind = PatternKind.BINARY) -> "PatternSet":
        return cls(np.zeros((0, n)), kind)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> Pattern:
        return Pattern(self.values[i], self.kind)

    def subset(self, idx) -> "PatternSet":
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else self.labels[idx]
        return PatternSet(self.values[idx], self.kind, labels)
