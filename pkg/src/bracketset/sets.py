"""Closed-interval unions: the geometric substrate for prediction sets.

All prediction sets produced by this package are finite disjoint unions of
closed intervals on the real line.  This module provides the value types and
the handful of exact operations everything else is built on: normalization,
Lebesgue volume, symmetric-difference volume, and bracket containment.

Comparisons use exact floating-point order; no epsilon snapping happens here
(callers that need a tolerance apply their own).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Interval",
    "IntervalUnion",
    "normalize_union",
    "volume",
    "sym_diff_volume",
    "contains_bracket",
    "contains_bracket_many",
    "is_subset",
    "union_to_pairs",
    "union_from_pairs",
]


@dataclass(frozen=True, order=True)
class Interval:
    """Closed interval [lo, hi]; degenerate (lo == hi) is allowed.

    Endpoints may be infinite (the full line is ``Interval(-inf, inf)``), but
    never NaN.
    """

    lo: float
    hi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"malformed interval: lo={self.lo!r} > hi={self.hi!r}")

    @property
    def length(self) -> float:
        return self.hi - self.lo


class IntervalUnion:
    """A finite disjoint union of closed intervals, sorted left to right.

    Components are strictly disjoint: ``intervals[m].hi < intervals[m+1].lo``.
    Overlapping or touching raw intervals are merged by
    :func:`normalize_union` (touching intervals have zero-measure overlap, so
    merging changes no volume).  Instances are immutable and safe to share
    across threads.
    """

    EMPTY: "IntervalUnion"

    def __init__(self, intervals: Sequence[Interval] = ()):
        ivs = tuple(intervals)
        for a, b in zip(ivs, ivs[1:]):
            if not a.hi < b.lo:
                raise ValueError(
                    "components must be sorted and strictly disjoint; "
                    "use normalize_union() for raw interval lists"
                )
        self.intervals = ivs

    @cached_property
    def _lows(self) -> np.ndarray:
        return np.array([iv.lo for iv in self.intervals], dtype=float)

    @cached_property
    def _highs(self) -> np.ndarray:
        return np.array([iv.hi for iv in self.intervals], dtype=float)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.intervals)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        return self.intervals == other.intervals

    def __hash__(self) -> int:
        return hash(self.intervals)

    def __repr__(self) -> str:
        body = " ∪ ".join(f"[{iv.lo:g}, {iv.hi:g}]" for iv in self.intervals)
        return f"IntervalUnion({body or '∅'})"

    @property
    def volume(self) -> float:
        return volume(self)


IntervalUnion.EMPTY = IntervalUnion()


def normalize_union(raw: Iterable[Interval]) -> IntervalUnion:
    """Sort and merge raw intervals into a valid :class:`IntervalUnion`.

    Overlapping or touching intervals are merged.  Idempotent; the empty
    input yields the empty union.
    """
    ivs = sorted(raw, key=lambda iv: (iv.lo, iv.hi))
    merged: list[Interval] = []
    for iv in ivs:
        if merged and iv.lo <= merged[-1].hi:
            if iv.hi > merged[-1].hi:
                merged[-1] = Interval(merged[-1].lo, iv.hi)
        else:
            merged.append(iv)
    return IntervalUnion(merged)


def volume(c: IntervalUnion) -> float:
    """Lebesgue measure of the union (sum of component lengths)."""
    return float(sum(iv.hi - iv.lo for iv in c.intervals))


def _intersection_volume(a: IntervalUnion, b: IntervalUnion) -> float:
    total = 0.0
    i = j = 0
    while i < len(a.intervals) and j < len(b.intervals):
        x, y = a.intervals[i], b.intervals[j]
        lo, hi = max(x.lo, y.lo), min(x.hi, y.hi)
        if lo < hi:
            total += hi - lo
        if x.hi <= y.hi:
            i += 1
        else:
            j += 1
    return total


def sym_diff_volume(a: IntervalUnion, b: IntervalUnion) -> float:
    """Volume of the symmetric difference mu(A \\ B) + mu(B \\ A)."""
    return volume(a) + volume(b) - 2.0 * _intersection_volume(a, b)


def contains_bracket(c: IntervalUnion, y_lo: float, y_hi: float) -> bool:
    """True iff the bracket [y_lo, y_hi] sits inside a single component.

    A bracket spanning the gap between two components is not contained, even
    if both endpoints individually are.
    """
    if y_lo > y_hi:
        raise ValueError("bracket must satisfy y_lo <= y_hi")
    # Only candidate: the component with the largest lo not exceeding y_lo.
    idx = int(np.searchsorted(c._lows, y_lo, side="right")) - 1 if c.intervals else -1
    return idx >= 0 and y_hi <= c.intervals[idx].hi


def contains_bracket_many(
    c: IntervalUnion, y_lo: np.ndarray, y_hi: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`contains_bracket` over arrays of brackets."""
    y_lo = np.asarray(y_lo, dtype=float)
    y_hi = np.asarray(y_hi, dtype=float)
    if c.is_empty:
        return np.zeros(y_lo.shape, dtype=bool)
    idx = np.searchsorted(c._lows, y_lo, side="right") - 1
    ok = idx >= 0
    out = np.zeros(y_lo.shape, dtype=bool)
    out[ok] = y_hi[ok] <= c._highs[idx[ok]]
    return out


def is_subset(inner: IntervalUnion, outer: IntervalUnion) -> bool:
    """Set containment: every component of ``inner`` fits inside ``outer``."""
    return all(contains_bracket(outer, iv.lo, iv.hi) for iv in inner.intervals)


def _endpoint_to_json(v: float) -> float | None:
    # JSON has no Infinity literal; infinite endpoints map to null.
    return None if math.isinf(v) else v


def union_to_pairs(c: IntervalUnion) -> list[list[float | None]]:
    """JSON-friendly form: sorted list of [lo, hi] pairs (null == infinite)."""
    return [[_endpoint_to_json(iv.lo), _endpoint_to_json(iv.hi)] for iv in c.intervals]


def union_from_pairs(pairs: Iterable[Sequence[float | None]]) -> IntervalUnion:
    """Inverse of :func:`union_to_pairs`."""
    ivs = []
    for lo, hi in pairs:
        ivs.append(
            Interval(
                -math.inf if lo is None else float(lo),
                math.inf if hi is None else float(hi),
            )
        )
    return IntervalUnion(ivs)
