"""Grid-backed prediction rules: a map from covariates to interval unions.

A rule stores one interval union per covariate grid point; evaluation
anywhere else uses nearest-grid-point lookup.  Grid points whose fit failed
(empty kernel neighborhood) are marked undefined and evaluating there is an
error.
"""

from __future__ import annotations

import json
import math
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .sets import (
    IntervalUnion,
    contains_bracket_many,
    union_from_pairs,
    union_to_pairs,
)

__all__ = ["PredictionRule", "RuleUndefinedError"]


class RuleUndefinedError(ValueError):
    """Raised when evaluating a rule where its nearest grid point is undefined."""


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return {"__inf__": 1 if value > 0 else -1}
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _json_restore(value):
    if isinstance(value, dict):
        if set(value) == {"__inf__"}:
            return math.inf * value["__inf__"]
        return {k: _json_restore(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_restore(v) for v in value]
    return value


class PredictionRule:
    """Piecewise-constant prediction rule on a covariate grid.

    Parameters
    ----------
    grid : array-like, shape (G, d)
        Covariate grid points.
    sets : sequence of IntervalUnion or None
        One prediction set per grid point; ``None`` marks the point undefined.
    meta : dict, optional
        JSON-serializable provenance (kernel, solver config, thresholds, ...).
    """

    def __init__(self, grid, sets: Sequence[IntervalUnion | None], meta: dict | None = None):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.ndim != 2 or grid.shape[0] == 0:
            raise ValueError("grid must be a nonempty (G, d) array")
        sets = tuple(sets)
        if len(sets) != grid.shape[0]:
            raise ValueError("need exactly one set (or None) per grid point")
        self.grid = grid
        self.grid.setflags(write=False)
        self.sets = sets
        self.meta = dict(meta or {})

    @property
    def dim(self) -> int:
        return self.grid.shape[1]

    @property
    def n_points(self) -> int:
        return self.grid.shape[0]

    @cached_property
    def defined(self) -> np.ndarray:
        return np.array([s is not None for s in self.sets], dtype=bool)

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _sorted_1d(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.grid[:, 0], kind="stable")
        return self.grid[order, 0], order

    def nearest_indices(self, x) -> np.ndarray:
        """Index of the nearest grid point for each query row (ties go left)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.dim:
            raise ValueError(f"query has dimension {x.shape[1]}, rule has {self.dim}")
        if self.dim == 1:
            gx, order = self._sorted_1d
            pos = np.searchsorted(gx, x[:, 0])
            left = np.clip(pos - 1, 0, gx.size - 1)
            right = np.clip(pos, 0, gx.size - 1)
            take_right = np.abs(gx[right] - x[:, 0]) < np.abs(gx[left] - x[:, 0])
            return order[np.where(take_right, right, left)]
        d2 = ((x[:, None, :] - self.grid[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def evaluate(self, x) -> IntervalUnion:
        """Prediction set at x (nearest grid point); raises if undefined."""
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        idx = int(self.nearest_indices(pt[None, :])[0])
        s = self.sets[idx]
        if s is None:
            raise RuleUndefinedError(f"rule undefined at x={x!r} (grid point {idx})")
        return s

    def _indices_checked(self, x) -> np.ndarray:
        idx = self.nearest_indices(x)
        if not self.defined[idx].all():
            bad = int(np.argmin(self.defined[idx]))
            raise RuleUndefinedError(f"rule undefined at query row {bad}")
        return idx

    def contains_brackets(self, x, y_lo, y_hi) -> np.ndarray:
        """Vectorized bracket containment for query rows (x_i, [y_lo_i, y_hi_i])."""
        idx = self._indices_checked(x)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        out = np.zeros(y_lo.shape, dtype=bool)
        for gi in np.unique(idx):
            sel = idx == gi
            out[sel] = contains_bracket_many(self.sets[gi], y_lo[sel], y_hi[sel])
        return out

    @cached_property
    def _padded_components(self) -> tuple[np.ndarray, np.ndarray]:
        # Absent component slots get (lo=+inf, hi=-inf): they never contain a
        # bracket and never win the min in the conformity score.
        m_max = max((len(s) for s in self.sets if s is not None), default=0)
        m_max = max(m_max, 1)
        g = self.n_points
        lo = np.full((g, m_max), np.inf)
        hi = np.full((g, m_max), -np.inf)
        for i, s in enumerate(self.sets):
            if s is None or s.is_empty:
                continue
            lo[i, : len(s)] = s._lows
            hi[i, : len(s)] = s._highs
        return lo, hi

    def scores(self, x, y_lo, y_hi) -> np.ndarray:
        """Conformity scores min_m max(lo_m - y_lo, y_hi - hi_m) per query row."""
        idx = self._indices_checked(x)
        y_lo = np.asarray(y_lo, dtype=float)
        y_hi = np.asarray(y_hi, dtype=float)
        comp_lo, comp_hi = self._padded_components
        lo = comp_lo[idx]
        hi = comp_hi[idx]
        per_comp = np.maximum(lo - y_lo[:, None], y_hi[:, None] - hi)
        return per_comp.min(axis=1)

    # -- transformation -----------------------------------------------------

    def map_sets(
        self, fn: Callable[[int, IntervalUnion], IntervalUnion], meta: dict | None = None
    ) -> "PredictionRule":
        """New rule with each defined set replaced by ``fn(index, set)``."""
        new_sets = [None if s is None else fn(i, s) for i, s in enumerate(self.sets)]
        merged_meta = dict(self.meta)
        merged_meta.update(meta or {})
        return PredictionRule(self.grid, new_sets, meta=merged_meta)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "grid": [list(map(float, row)) for row in self.grid],
            "sets": [None if s is None else union_to_pairs(s) for s in self.sets],
            "meta": _json_safe(self.meta),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionRule":
        sets = [None if s is None else union_from_pairs(s) for s in obj["sets"]]
        return cls(np.asarray(obj["grid"], dtype=float), sets, meta=_json_restore(obj.get("meta", {})))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "PredictionRule":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))
