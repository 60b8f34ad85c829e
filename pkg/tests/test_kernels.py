import numpy as np
import pytest

from bracketset.data import Dataset
from bracketset.kernels import (
    EmptyNeighborhoodError,
    KernelSpec,
    containment_prob,
    default_bandwidth,
    kernel_value,
    weights_at,
)
from bracketset.sets import Interval, IntervalUnion, contains_bracket, normalize_union


def test_epanechnikov_center():
    spec = KernelSpec("epanechnikov", (1.0,))
    assert kernel_value(spec, [0.0]) == pytest.approx(0.75)


def test_epanechnikov_outside_support():
    spec = KernelSpec("epanechnikov", (1.0,))
    assert kernel_value(spec, [1.5]) == 0.0


def test_product_kernel_two_dims():
    spec = KernelSpec("epanechnikov", (1.0, 1.0))
    assert kernel_value(spec, [0.0, 0.0]) == pytest.approx(0.5625)


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_value(KernelSpec("epanechnikov", (1.0,)), [0.0, 0.0])


def test_kernel_families_integrate_to_one():
    # numerical quadrature over the support for each univariate profile
    from bracketset.kernels import _PROFILES

    t = np.linspace(-3.5, 3.5, 140001)
    for family, profile in _PROFILES.items():
        mass = np.trapezoid(profile(t), t)
        assert mass == pytest.approx(1.0, abs=1e-4), family


def test_bad_family_rejected():
    with pytest.raises(ValueError):
        KernelSpec("triweight", (1.0,))


def test_bad_bandwidth_rejected():
    with pytest.raises(ValueError):
        KernelSpec("uniform", (0.0,))


# -- weights ----------------------------------------------------------------


def test_single_observation_gets_unit_weight():
    data = Dataset(np.array([[0.5]]), np.array([0.0]), np.array([1.0]))
    wv = weights_at(data, [0.5], KernelSpec("epanechnikov", (1.0,)))
    assert not wv.empty
    assert wv.weights == pytest.approx([1.0])


def test_equidistant_observations_split_weight():
    data = Dataset(np.array([[-0.3], [0.3]]), np.zeros(2), np.ones(2))
    wv = weights_at(data, [0.0], KernelSpec("epanechnikov", (1.0,)))
    assert wv.weights == pytest.approx([0.5, 0.5])


def test_far_query_flags_empty_neighborhood():
    data = Dataset(np.array([[0.0], [0.1]]), np.zeros(2), np.ones(2))
    wv = weights_at(data, [5.0], KernelSpec("epanechnikov", (0.5,)))
    assert wv.empty
    assert np.all(wv.weights == 0.0)


def test_weights_sum_to_one():
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(200, 2)), np.zeros(200), np.ones(200))
    wv = weights_at(data, [0.0, 0.0], KernelSpec("epanechnikov", (1.0, 1.0)))
    assert wv.weights.sum() == pytest.approx(1.0)


# -- containment probability ---------------------------------------------------


def test_containment_hull_is_one():
    rng = np.random.default_rng(1)
    y = rng.normal(size=100)
    data = Dataset(rng.uniform(-1, 1, size=(100, 1)), y - 1, y + 1)
    hull = IntervalUnion([Interval(float((y - 1).min()), float((y + 1).max()))])
    p = containment_prob(data, hull, [0.0], KernelSpec("epanechnikov", (2.0,)))
    assert p == pytest.approx(1.0)


def test_containment_empty_set_is_zero():
    data = Dataset(np.array([[0.0]]), np.array([0.0]), np.array([1.0]))
    assert containment_prob(data, IntervalUnion(), [0.0], KernelSpec("uniform", (1.0,))) == 0.0


def test_containment_equal_weight_half():
    data = Dataset(np.array([[0.0], [0.0]]), np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    c = IntervalUnion([Interval(0.0, 1.0)])
    assert containment_prob(data, c, [0.0], KernelSpec("epanechnikov", (1.0,))) == pytest.approx(0.5)


def test_containment_error_propagates_empty_neighborhood():
    data = Dataset(np.array([[0.0]]), np.array([0.0]), np.array([1.0]))
    with pytest.raises(EmptyNeighborhoodError):
        containment_prob(data, IntervalUnion(), [9.0], KernelSpec("uniform", (1.0,)))


def test_containment_matches_direct_enumeration():
    rng = np.random.default_rng(4)
    n = 150
    x = rng.uniform(-1, 1, size=(n, 1))
    y_lo = rng.normal(size=n)
    y_hi = y_lo + rng.uniform(0, 1, size=n)
    data = Dataset(x, y_lo, y_hi)
    c = normalize_union([Interval(-1.0, 0.2), Interval(0.5, 2.0)])
    spec = KernelSpec("epanechnikov", (0.6,))
    wv = weights_at(data, [0.1], spec)
    expected = sum(
        float(wv.weights[i]) if contains_bracket(c, y_lo[i], y_hi[i]) else 0.0
        for i in range(n)
    )
    assert containment_prob(data, c, [0.1], spec) == pytest.approx(expected)


def test_containment_monotone_in_set():
    rng = np.random.default_rng(5)
    n = 120
    y = rng.normal(size=n)
    data = Dataset(rng.uniform(-1, 1, size=(n, 1)), y - 0.3, y + 0.3)
    spec = KernelSpec("epanechnikov", (0.8,))
    inner = normalize_union([Interval(-0.5, 0.5)])
    outer = normalize_union([Interval(-1.0, 1.0), Interval(2.0, 3.0)])
    assert containment_prob(data, inner, [0.0], spec) <= containment_prob(
        data, outer, [0.0], spec
    )


def test_uniform_kernel_wide_bandwidth_recovers_plain_frequency():
    rng = np.random.default_rng(6)
    n = 400
    y = rng.normal(size=n)
    data = Dataset(rng.uniform(-1, 1, size=(n, 1)), y - 0.5, y + 0.5)
    c = IntervalUnion([Interval(-1.0, 1.0)])
    p = containment_prob(data, c, [0.3], KernelSpec("uniform", (1e6,)))
    plain = np.mean((data.y_lo >= -1.0) & (data.y_hi <= 1.0))
    assert p == pytest.approx(plain)


# -- bandwidth rule --------------------------------------------------------------


def test_default_bandwidth_matches_rule():
    rng = np.random.default_rng(7)
    n = 2500
    x = rng.uniform(-1.5, 1.5, size=(n, 1))
    data = Dataset(x, np.zeros(n), np.ones(n))
    spec = default_bandwidth(data)
    expected = 1.5 * np.std(x[:, 0], ddof=1) * n ** (-1.0 / 5.0)
    assert spec.bandwidth[0] == pytest.approx(expected)
    assert 0.2 < spec.bandwidth[0] < 0.35  # around 0.27 for sd ~ 0.866


def test_default_bandwidth_needs_two_points():
    data = Dataset(np.array([[0.0]]), np.array([0.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        default_bandwidth(data)


def test_default_bandwidth_constant_covariate_fallback():
    data = Dataset(np.zeros((10, 1)), np.zeros(10), np.ones(10))
    assert default_bandwidth(data).bandwidth == (1.0,)


def test_estimator_uniform_consistency_improves_with_n():
    # DGP with closed-form P(t0, t1; x): latent y = x + N(0,1), bracket
    # endpoints y -/+ 1, so containment in [t0, t1] happens iff the latent
    # value lies in [t0 + 1, t1 - 1].
    from scipy.stats import norm

    def true_prob(t0, t1, x):
        if t1 - 1 < t0 + 1:
            return 0.0
        return norm.cdf(t1 - 1 - x) - norm.cdf(t0 + 1 - x)

    t0s = np.array([-3.0, -2.0, -1.0, 0.0])
    t1s = np.array([1.0, 2.0, 3.0, 4.0])
    xs = np.array([0.3, 0.5, 0.7])
    errors = []
    for n in (500, 2000, 8000):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, size=n)
        y = x + rng.standard_normal(n)
        data = Dataset(x[:, None], y - 1, y + 1)
        spec = default_bandwidth(data)
        worst = 0.0
        for xv in xs:
            for t0 in t0s:
                for t1 in t1s:
                    c = IntervalUnion([Interval(t0, t1)])
                    est = containment_prob(data, c, [xv], spec)
                    worst = max(worst, abs(est - true_prob(t0, t1, xv)))
        errors.append(worst)
    assert errors[0] > errors[1] > errors[2]
