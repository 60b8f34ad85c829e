"""Kernel-weighted estimation of conditional bracket-containment probability.

Given observations with bracketed outcomes, the conditional probability that
a bracket falls inside a candidate set C at covariate value x is estimated by
a Nadaraya-Watson style ratio: kernel weights on the covariates times the
containment indicator.  Product kernels with compact (or truncated) support
are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .sets import IntervalUnion, contains_bracket_many

__all__ = [
    "KernelSpec",
    "WeightVector",
    "EmptyNeighborhoodError",
    "kernel_value",
    "weights_at",
    "containment_prob",
    "default_bandwidth",
    "DEFAULT_BANDWIDTH_SCALE",
]

DEFAULT_BANDWIDTH_SCALE = 1.5

# Truncation point and mass of the truncated-gaussian profile.
_GAUSS_TRUNC = 3.0


class EmptyNeighborhoodError(ValueError):
    """Raised when every kernel weight at the query point is zero."""


def _profile_epanechnikov(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)


def _profile_uniform(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) <= 1.0, 0.5, 0.0)


def _profile_gaussian_truncated(t: np.ndarray) -> np.ndarray:
    from scipy.stats import norm

    z = norm.cdf(_GAUSS_TRUNC) - norm.cdf(-_GAUSS_TRUNC)
    return np.where(np.abs(t) <= _GAUSS_TRUNC, norm.pdf(t) / z, 0.0)


_PROFILES = {
    "epanechnikov": _profile_epanechnikov,
    "uniform": _profile_uniform,
    "gaussian-truncated": _profile_gaussian_truncated,
}


@dataclass(frozen=True)
class KernelSpec:
    """Product smoothing kernel: family name plus per-dimension bandwidth."""

    family: str = "epanechnikov"
    bandwidth: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.family not in _PROFILES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {sorted(_PROFILES)}"
            )
        bw = tuple(float(b) for b in np.atleast_1d(np.asarray(self.bandwidth, dtype=float)))
        if any(b <= 0 or not np.isfinite(b) for b in bw):
            raise ValueError("bandwidth must be positive and finite componentwise")
        object.__setattr__(self, "bandwidth", bw)

    @property
    def dim(self) -> int:
        return len(self.bandwidth)

    def to_json(self) -> dict:
        return {"family": self.family, "bandwidth": list(self.bandwidth)}

    @classmethod
    def from_json(cls, obj: dict) -> "KernelSpec":
        return cls(family=obj["family"], bandwidth=tuple(obj["bandwidth"]))


@dataclass(frozen=True)
class WeightVector:
    """Normalized kernel weights over training observations.

    ``empty`` flags the degenerate case where every raw kernel value was
    zero; the weights are then all zero rather than silently uniform.
    """

    weights: np.ndarray
    empty: bool = field(default=False)


def kernel_value(spec: KernelSpec, u) -> float:
    """Product kernel value at standardized offset u (one entry per dim)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (spec.dim,):
        raise ValueError(f"offset has dimension {u.shape}, kernel expects ({spec.dim},)")
    return float(np.prod(_PROFILES[spec.family](u)))


def weights_at(data: Dataset, x, spec: KernelSpec) -> WeightVector:
    """Normalized kernel weights of every observation relative to x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (data.dim,):
        raise ValueError(f"x has shape {x.shape}, dataset dimension is {data.dim}")
    if spec.dim != data.dim:
        raise ValueError("kernel bandwidth dimension does not match dataset")
    u = (x[None, :] - data.x) / np.asarray(spec.bandwidth)[None, :]
    raw = np.prod(_PROFILES[spec.family](u), axis=1)
    total = raw.sum()
    if total <= 0.0:
        return WeightVector(np.zeros(data.n), empty=True)
    return WeightVector(raw / total)


def containment_prob(data: Dataset, c: IntervalUnion, x, spec: KernelSpec) -> float:
    """Kernel-weighted frequency of brackets contained in C near x."""
    wv = weights_at(data, x, spec)
    if wv.empty:
        raise EmptyNeighborhoodError(
            f"no observations within kernel support of x={np.asarray(x)!r}"
        )
    inside = contains_bracket_many(c, data.y_lo, data.y_hi)
    return float(wv.weights @ inside)


def default_bandwidth(data: Dataset, scale: float = DEFAULT_BANDWIDTH_SCALE) -> KernelSpec:
    """Rule-of-thumb Epanechnikov bandwidth: scale * sd(X_j) * n^(-1/(4+d)).

    The exponent satisfies the usual h -> 0, n h^d -> infinity growth
    conditions; the scale constant is a tuning default, not sacred.  A
    zero-variance covariate falls back to bandwidth 1 in that dimension.
    """
    if data.n < 2:
        raise ValueError("need at least 2 observations for a bandwidth rule")
    sd = np.std(data.x, axis=0, ddof=1)
    rate = float(data.n) ** (-1.0 / (4.0 + data.dim))
    bw = np.where(sd > 0, scale * sd * rate, 1.0)
    return KernelSpec(family="epanechnikov", bandwidth=tuple(bw))
