"""Split conformal calibration of prediction rules for bracketed outcomes.

The conformity score of a bracket [y_lo, y_hi] against a union of intervals
is the smallest over components of max(component_lo - y_lo, y_hi -
component_hi): nonpositive exactly when the bracket sits inside some
component.  Calibration computes an order statistic of these scores on a
held-out split and inflates every component endpoint by it, which yields
finite-sample marginal coverage under exchangeability; a partition of the
covariate space gives locally valid per-cell thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .kernels import KernelSpec, default_bandwidth
from .rules import PredictionRule
from .sets import Interval, IntervalUnion, normalize_union
from .solver import SolverConfig, fit_prediction_rule

__all__ = [
    "CalibrationResult",
    "Partition",
    "score",
    "conformal_threshold",
    "inflate",
    "split_conformal",
    "local_split_conformal",
    "differential_adjust",
    "split_indices",
    "DEFAULT_SPLIT_FRAC",
    "DEFAULT_GRID_POINTS",
]

DEFAULT_SPLIT_FRAC = 0.75
DEFAULT_GRID_POINTS = 61

# Tolerance for float dust in the quantile rank (1 - alpha)(n2 + 1), which is
# integer-valued for round alpha but not exactly representable in binary.
_RANK_EPS = 1e-9


@dataclass(frozen=True)
class CalibrationResult:
    """Scores on the calibration split and the resulting threshold."""

    scores: np.ndarray
    threshold: float
    alpha: float
    n2: int
    seed: int | None = None
    calibration_indices: np.ndarray | None = field(default=None, repr=False)

    def to_json(self, include_scores: bool = False) -> dict:
        out = {
            "threshold": None if math.isinf(self.threshold) else float(self.threshold),
            "alpha": self.alpha,
            "n2": self.n2,
            "seed": self.seed,
            "calibration_indices": None
            if self.calibration_indices is None
            else [int(i) for i in self.calibration_indices],
        }
        if include_scores:
            out["scores"] = [float(s) for s in self.scores]
        return out


class Partition:
    """Axis-aligned covariate cells covering the region of interest.

    Cells are half-open boxes [lower, upper), except that points equal to the
    overall upper boundary fall in the last cell containing them.
    """

    def __init__(self, cells: Sequence[tuple[Sequence[float], Sequence[float]]]):
        if not cells:
            raise ValueError("partition needs at least one cell")
        self.lower = np.array([c[0] for c in cells], dtype=float)
        self.upper = np.array([c[1] for c in cells], dtype=float)
        if self.lower.ndim == 1:
            self.lower = self.lower[:, None]
            self.upper = self.upper[:, None]
        if np.any(self.lower >= self.upper):
            raise ValueError("each cell must have lower < upper componentwise")
        self._max_upper = self.upper.max(axis=0)

    @classmethod
    def equal_width(cls, lo: float, hi: float, k: int) -> "Partition":
        """K equal-width bins of the interval [lo, hi] (one covariate)."""
        edges = np.linspace(lo, hi, k + 1)
        return cls([((edges[i],), (edges[i + 1],)) for i in range(k)])

    @property
    def n_cells(self) -> int:
        return self.lower.shape[0]

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    def cell_indices(self, x) -> np.ndarray:
        """Cell index per query row; raises if a point is not covered."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        inside_lo = x[:, None, :] >= self.lower[None, :, :]
        inside_hi = (x[:, None, :] < self.upper[None, :, :]) | (
            (x[:, None, :] == self.upper[None, :, :])
            & (self.upper[None, :, :] == self._max_upper[None, None, :])
        )
        inside = (inside_lo & inside_hi).all(axis=2)
        if not inside.any(axis=1).all():
            bad = int(np.argmin(inside.any(axis=1)))
            raise ValueError(f"partition does not cover point {x[bad]!r}")
        return np.argmax(inside, axis=1)


def score(y_lo: float, y_hi: float, x, rule: PredictionRule) -> float:
    """Conformity score of one bracket; <= 0 iff the rule contains it."""
    if y_lo > y_hi:
        raise ValueError("bracket must satisfy y_lo <= y_hi")
    c = rule.evaluate(x)  # raises RuleUndefinedError where the rule is masked
    if c.is_empty:
        return math.inf
    per_comp = [max(iv.lo - y_lo, y_hi - iv.hi) for iv in c.intervals]
    return float(min(per_comp))


def conformal_threshold(scores, alpha: float) -> float:
    """Order statistic of rank ceil((1-alpha)(n2+1)); +inf if out of range.

    The +inf fallback (calibration set too small for the requested level)
    inflates the rule to the full line, which keeps validity.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("scores must be nonempty")
    n2 = s.size
    k = math.ceil((1.0 - alpha) * (n2 + 1) - _RANK_EPS)
    if k > n2:
        return math.inf
    k = max(k, 1)
    return float(np.partition(s, k - 1)[k - 1])


def _inflate_union(c: IntervalUnion, theta: float) -> IntervalUnion:
    if c.is_empty:
        return c
    if math.isinf(theta) and theta > 0:
        return IntervalUnion([Interval(-math.inf, math.inf)])
    grown = []
    for iv in c.intervals:
        lo, hi = iv.lo - theta, iv.hi + theta
        if hi >= lo:  # components shrunk past their midpoint vanish
            grown.append(Interval(lo, hi))
    return normalize_union(grown)


def inflate(rule: PredictionRule, theta: float) -> PredictionRule:
    """Grow (or shrink, for negative theta) every component endpoint by theta.

    Components that vanish are dropped; overlapping components are merged, so
    the result is again a valid rule.
    """
    return rule.map_sets(lambda _, c: _inflate_union(c, theta), meta={"threshold": theta})


def _default_grid(train: Dataset, n_points: int) -> np.ndarray:
    if train.dim != 1:
        raise ValueError("automatic grids are 1-d only; pass an explicit grid")
    lo, hi = float(train.x.min()), float(train.x.max())
    if lo == hi:
        return np.array([[lo]])
    return np.linspace(lo, hi, n_points)[:, None]


def split_indices(n: int, split_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split into training and calibration index arrays."""
    if not 0.0 < split_frac < 1.0:
        raise ValueError("split_frac must lie strictly between 0 and 1")
    n1 = int(round(split_frac * n))
    n1 = min(max(n1, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def split_conformal(
    data: Dataset,
    alpha: float,
    split_frac: float = DEFAULT_SPLIT_FRAC,
    spec: KernelSpec | None = None,
    cfg: SolverConfig | None = None,
    seed: int = 0,
    grid=None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> tuple[PredictionRule, CalibrationResult]:
    """Fit on a training split, calibrate on the rest, inflate by the threshold.

    The kernel bandwidth and the default evaluation grid are derived from the
    training split only, so calibration scores and a fresh point stay
    exchangeable.
    """
    idx1, idx2 = split_indices(data.n, split_frac, seed)
    train, calib = data.subset(idx1), data.subset(idx2)
    if spec is None:
        spec = default_bandwidth(train)
    if cfg is None:
        cfg = SolverConfig(alpha=alpha)
    if grid is None:
        grid = _default_grid(train, grid_points)
    rule = fit_prediction_rule(train, grid, spec, cfg)
    scores = rule.scores(calib.x, calib.y_lo, calib.y_hi)
    theta = conformal_threshold(scores, alpha)
    result = CalibrationResult(
        scores=scores,
        threshold=theta,
        alpha=alpha,
        n2=calib.n,
        seed=seed,
        calibration_indices=idx2,
    )
    inflated = inflate(rule, theta)
    inflated.meta["alpha"] = alpha
    inflated.meta["seed"] = seed
    return inflated, result


def local_split_conformal(
    data: Dataset,
    partition: Partition,
    alpha: float,
    split_frac: float = DEFAULT_SPLIT_FRAC,
    spec: KernelSpec | None = None,
    cfg: SolverConfig | None = None,
    seed: int = 0,
    grid=None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> tuple[PredictionRule, list[CalibrationResult]]:
    """Locally valid variant: per-cell thresholds from per-cell scores.

    Each grid point is inflated by the threshold of the partition cell that
    contains it.  Cells with no calibration points fall back to +inf (full
    line on that cell).
    """
    idx1, idx2 = split_indices(data.n, split_frac, seed)
    train, calib = data.subset(idx1), data.subset(idx2)
    if spec is None:
        spec = default_bandwidth(train)
    if cfg is None:
        cfg = SolverConfig(alpha=alpha)
    if grid is None:
        grid = _default_grid(train, grid_points)
    rule = fit_prediction_rule(train, grid, spec, cfg)
    scores = rule.scores(calib.x, calib.y_lo, calib.y_hi)
    cells = partition.cell_indices(calib.x)
    thresholds = np.empty(partition.n_cells)
    results = []
    for k in range(partition.n_cells):
        cell_scores = scores[cells == k]
        theta_k = conformal_threshold(cell_scores, alpha) if cell_scores.size else math.inf
        thresholds[k] = theta_k
        results.append(
            CalibrationResult(
                scores=cell_scores,
                threshold=theta_k,
                alpha=alpha,
                n2=int(cell_scores.size),
                seed=seed,
                calibration_indices=idx2[cells == k],
            )
        )
    grid_cells = partition.cell_indices(rule.grid)
    local = rule.map_sets(
        lambda i, c: _inflate_union(c, float(thresholds[grid_cells[i]])),
        meta={"thresholds": [float(t) for t in thresholds], "alpha": alpha, "seed": seed},
    )
    return local, results


def differential_adjust(
    rule: PredictionRule, calib: Dataset, alpha: float
) -> PredictionRule:
    """Per-endpoint inflation of minimal Euclidean norm meeting calibration coverage.

    Starts from the symmetric threshold (always feasible) and relaxes one
    endpoint coordinate at a time toward zero while the count of contained
    calibration brackets stays at least ceil((1-alpha)(n2+1)).  The result is
    feasible with norm no larger than the symmetric solution's; global
    optimality is not claimed.
    """
    scores = rule.scores(calib.x, calib.y_lo, calib.y_hi)
    theta0 = conformal_threshold(scores, alpha)
    if math.isinf(theta0):
        full = inflate(rule, theta0)
        full.meta["endpoint_adjustments"] = None
        return full
    n2 = calib.n
    k = math.ceil((1.0 - alpha) * (n2 + 1) - _RANK_EPS)
    k = max(k, 1)

    comp_lo, comp_hi = rule._padded_components
    idx = rule._indices_checked(calib.x)
    # Required per-endpoint inflation for each calibration bracket to enter
    # each component; +inf where the component slot is absent.
    need_lo = comp_lo[idx] - calib.y_lo[:, None]
    need_hi = calib.y_hi[:, None] - comp_hi[idx]
    m = comp_lo.shape[1]

    w = np.full(2 * m, float(theta0))
    contained_via = (need_lo <= w[0::2][None, :]) & (need_hi <= w[1::2][None, :])

    def coordinate_floor(j: int) -> float:
        comp = j // 2
        other = np.delete(contained_via, comp, axis=1).any(axis=1)
        n_other = int(other.sum())
        if n_other >= k:
            return -math.inf
        side_need = need_lo[:, comp] if j % 2 == 0 else need_hi[:, comp]
        fixed_need = need_hi[:, comp] if j % 2 == 0 else need_lo[:, comp]
        fixed_w = w[2 * comp + 1] if j % 2 == 0 else w[2 * comp]
        eligible = (~other) & (fixed_need <= fixed_w) & np.isfinite(side_need)
        crit = np.sort(side_need[eligible])
        short = k - n_other
        if crit.size < short:
            return math.inf
        return float(crit[short - 1])

    for _ in range(8):
        changed = False
        for j in range(2 * m):
            floor_j = coordinate_floor(j)
            if floor_j == math.inf:
                continue  # cannot be met by this coordinate alone; keep as is
            # Feasible set for the coordinate is [floor_j, inf); the value of
            # minimal magnitude inside it is floor_j when positive, else 0.
            target = floor_j if floor_j > 0 else 0.0
            if target != w[j]:
                w[j] = target
                comp = j // 2
                contained_via[:, comp] = (need_lo[:, comp] <= w[2 * comp]) & (
                    need_hi[:, comp] <= w[2 * comp + 1]
                )
                changed = True
        if not changed:
            break

    if contained_via.any(axis=1).sum() < k:  # pragma: no cover - safety net
        raise RuntimeError("differential adjustment lost feasibility")

    def adjust(i: int, c: IntervalUnion) -> IntervalUnion:
        grown = []
        for comp, iv in enumerate(c.intervals):
            lo, hi = iv.lo - w[2 * comp], iv.hi + w[2 * comp + 1]
            if hi >= lo:
                grown.append(Interval(lo, hi))
        return normalize_union(grown)

    adjusted = rule.map_sets(adjust)
    adjusted.meta["endpoint_adjustments"] = [float(v) for v in w]
    adjusted.meta["symmetric_threshold"] = float(theta0)
    return adjusted
