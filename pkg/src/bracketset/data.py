"""Observations with bracketed outcomes and the dataset container."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = ["Observation", "Dataset"]


@dataclass(frozen=True)
class Observation:
    """One record: covariate vector plus outcome bracket [y_lo, y_hi].

    Exactly observed outcomes are encoded as zero-width brackets
    (``y_lo == y_hi``).
    """

    x: tuple[float, ...]
    y_lo: float
    y_hi: float


class Dataset:
    """Immutable column store of observations sharing covariate dimension d.

    Parameters
    ----------
    x : array-like, shape (n, d)
        Covariates; a 1-d array is treated as a single covariate column.
    y_lo, y_hi : array-like, shape (n,)
        Bracket endpoints; must be finite with ``y_lo <= y_hi`` row-wise
        (open-ended bands must be mapped to a finite top-code upstream).
    """

    def __init__(self, x, y_lo, y_hi):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array of shape (n, d)")
        n = x.shape[0]
        if n == 0:
            raise ValueError("dataset must be nonempty")
        if y_lo.shape != (n,) or y_hi.shape != (n,):
            raise ValueError("y_lo and y_hi must be 1-d arrays matching x rows")
        if not (np.isfinite(x).all() and np.isfinite(y_lo).all() and np.isfinite(y_hi).all()):
            raise ValueError("covariates and bracket endpoints must be finite")
        if np.any(y_lo > y_hi):
            bad = int(np.argmax(y_lo > y_hi))
            raise ValueError(f"bracket with y_lo > y_hi at row {bad}")
        self.x = x
        self.y_lo = y_lo
        self.y_hi = y_hi
        self.x.setflags(write=False)
        self.y_lo.setflags(write=False)
        self.y_hi.setflags(write=False)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "Dataset":
        if not observations:
            raise ValueError("dataset must be nonempty")
        d = len(observations[0].x)
        if any(len(o.x) != d for o in observations):
            raise ValueError("all observations must share covariate dimension")
        return cls(
            np.array([o.x for o in observations], dtype=float),
            np.array([o.y_lo for o in observations], dtype=float),
            np.array([o.y_hi for o in observations], dtype=float),
        )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield Observation(tuple(self.x[i]), float(self.y_lo[i]), float(self.y_hi[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y_lo[idx], self.y_hi[idx])
