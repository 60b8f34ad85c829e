"""Polynomial quantile-regression baseline and its conformalized version.

Fits pinball-loss polynomial quantiles of the bracket endpoints: the alpha/2
quantile of the lower endpoint and the 1 - alpha/2 quantile of the upper
endpoint.  By Bonferroni, the band between them is a valid (if not minimal)
prediction interval; conformalizing it restores finite-sample coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .conformal import (
    DEFAULT_GRID_POINTS,
    DEFAULT_SPLIT_FRAC,
    CalibrationResult,
    conformal_threshold,
    inflate,
    split_indices,
)
from .data import Dataset
from .rules import PredictionRule
from .sets import Interval, IntervalUnion

__all__ = ["QuantileFit", "fit_pinball", "quantile_rule", "conformalize_quantile_rule"]


@dataclass(frozen=True)
class QuantileFit:
    """Polynomial conditional-quantile fit: level, degree, ascending coefficients."""

    level: float
    degree: int
    coefficients: np.ndarray

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, self.coefficients)


def pinball_loss(residuals, level: float) -> float:
    """Mean check loss: level * positive part + (1 - level) * negative part."""
    r = np.asarray(residuals, dtype=float)
    return float(np.mean(np.where(r >= 0, level * r, (level - 1.0) * r)))


def fit_pinball(data: Dataset, target: str, level: float, degree: int) -> QuantileFit:
    """Minimize the pinball loss over polynomial coefficients.

    ``target`` selects which bracket endpoint is regressed ("lower" or
    "upper").  Degree 0 reduces to the empirical quantile (leftmost check-loss
    minimizer); higher degrees solve the standard quantile-regression linear
    program, which is convex and solved to optimality.
    """
    if target not in ("lower", "upper"):
        raise ValueError("target must be 'lower' or 'upper'")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if degree < 0 or int(degree) != degree:
        raise ValueError("degree must be a nonnegative integer")
    if data.dim != 1:
        raise ValueError("polynomial quantile baseline supports one covariate")
    if data.n <= degree + 1:
        raise ValueError("need n > degree + 1 observations")
    y = data.y_lo if target == "lower" else data.y_hi
    x = data.x[:, 0]

    if degree == 0:
        c = float(np.quantile(y, level, method="inverted_cdf"))
        return QuantileFit(level, 0, np.array([c]))

    if np.ptp(x) == 0.0:
        raise ValueError("degenerate design: all covariate values equal")

    n, p = data.n, degree + 1
    design = np.vander(x, N=p, increasing=True)
    a_eq = sparse.hstack(
        [sparse.csr_matrix(design), sparse.eye(n, format="csr"), -sparse.eye(n, format="csr")],
        format="csr",
    )
    cost = np.concatenate([np.zeros(p), np.full(n, level), np.full(n, 1.0 - level)])
    bounds = [(None, None)] * p + [(0.0, None)] * (2 * n)
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:  # pragma: no cover - HiGHS is reliable on this LP
        raise RuntimeError(f"quantile LP failed: {res.message}")
    return QuantileFit(level, degree, res.x[:p].copy())


def quantile_rule(
    data: Dataset,
    alpha: float,
    degree: int,
    grid=None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> PredictionRule:
    """Single-interval rule between the fitted lower and upper quantile curves.

    Where the curves cross (upper below lower), the interval collapses to
    their midpoint and the crossing is counted in ``meta['crossings']``.
    """
    low_fit = fit_pinball(data, "lower", alpha / 2.0, degree)
    high_fit = fit_pinball(data, "upper", 1.0 - alpha / 2.0, degree)
    if grid is None:
        lo, hi = float(data.x.min()), float(data.x.max())
        grid = np.array([[lo]]) if lo == hi else np.linspace(lo, hi, grid_points)[:, None]
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    ql = low_fit.predict(grid[:, 0])
    qu = high_fit.predict(grid[:, 0])
    crossings = int(np.sum(qu < ql))
    sets = []
    for lo_v, hi_v in zip(ql, qu):
        if hi_v < lo_v:
            mid = 0.5 * (lo_v + hi_v)
            sets.append(IntervalUnion([Interval(mid, mid)]))
        else:
            sets.append(IntervalUnion([Interval(float(lo_v), float(hi_v))]))
    meta = {
        "method": "quantile",
        "alpha": alpha,
        "degree": int(degree),
        "crossings": crossings,
        "lower_coefficients": [float(c) for c in low_fit.coefficients],
        "upper_coefficients": [float(c) for c in high_fit.coefficients],
    }
    return PredictionRule(grid, sets, meta=meta)


def conformalize_quantile_rule(
    data: Dataset,
    alpha: float,
    degree: int,
    split_frac: float = DEFAULT_SPLIT_FRAC,
    seed: int = 0,
    grid=None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> PredictionRule:
    """Split-conformal version of the quantile band (same machinery as the
    set-based pipeline, with a single component)."""
    idx1, idx2 = split_indices(data.n, split_frac, seed)
    train, calib = data.subset(idx1), data.subset(idx2)
    rule = quantile_rule(train, alpha, degree, grid=grid, grid_points=grid_points)
    scores = rule.scores(calib.x, calib.y_lo, calib.y_hi)
    theta = conformal_threshold(scores, alpha)
    out = inflate(rule, theta)
    out.meta["alpha"] = alpha
    out.meta["seed"] = seed
    out.meta["calibration"] = CalibrationResult(
        scores=scores, threshold=theta, alpha=alpha, n2=calib.n, seed=seed
    ).to_json()
    return out
