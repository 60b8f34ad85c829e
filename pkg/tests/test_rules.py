import json
import math

import numpy as np
import pytest

from bracketset.rules import PredictionRule, RuleUndefinedError
from bracketset.sets import Interval, IntervalUnion, normalize_union


def make_rule():
    grid = np.array([[-1.0], [0.0], [1.0]])
    sets = [
        normalize_union([Interval(0, 1)]),
        normalize_union([Interval(-2, -1), Interval(1, 3)]),
        None,
    ]
    return PredictionRule(grid, sets, meta={"alpha": 0.1, "threshold": math.inf})


def test_nearest_lookup_ties_go_left():
    rule = make_rule()
    idx = rule.nearest_indices(np.array([[-0.8], [-0.5], [0.2]]))
    assert idx.tolist() == [0, 0, 1]


def test_evaluate_uses_nearest():
    rule = make_rule()
    assert rule.evaluate([-0.9]) == rule.sets[0]
    assert rule.evaluate([0.4]) == rule.sets[1]


def test_evaluate_undefined_raises():
    with pytest.raises(RuleUndefinedError):
        make_rule().evaluate([2.0])


def test_unsorted_grid_lookup():
    grid = np.array([[1.0], [-1.0], [0.0]])
    sets = [normalize_union([Interval(i, i + 1)]) for i in range(3)]
    rule = PredictionRule(grid, sets)
    assert rule.evaluate([0.9]) == sets[0]
    assert rule.evaluate([-0.9]) == sets[1]
    assert rule.evaluate([0.1]) == sets[2]


def test_multidim_nearest():
    grid = np.array([[0.0, 0.0], [1.0, 1.0]])
    sets = [normalize_union([Interval(0, 1)]), normalize_union([Interval(5, 6)])]
    rule = PredictionRule(grid, sets)
    assert rule.evaluate([0.9, 0.8]) == sets[1]


def test_contains_brackets_batch():
    rule = make_rule()
    x = np.array([[-1.0], [0.0], [0.0]])
    got = rule.contains_brackets(x, [0.2, -1.8, 0.0], [0.8, -1.2, 2.0])
    assert got.tolist() == [True, True, False]


def test_json_round_trip_bit_identical():
    rule = make_rule()
    blob = json.dumps(rule.to_json())
    loaded = PredictionRule.from_json(json.loads(blob))
    assert loaded.sets == rule.sets
    assert np.array_equal(loaded.grid, rule.grid)
    assert loaded.meta == rule.meta  # inf threshold survives
    # re-evaluation identical
    x = np.array([[-0.7], [0.3]])
    for xv in x:
        assert loaded.evaluate(xv) == rule.evaluate(xv)
    assert json.dumps(loaded.to_json()) == blob


def test_save_load(tmp_path):
    rule = make_rule()
    path = tmp_path / "rule.json"
    rule.save(path)
    loaded = PredictionRule.load(path)
    assert loaded.sets == rule.sets


def test_scores_empty_set_infinite():
    grid = np.array([[0.0]])
    rule = PredictionRule(grid, [IntervalUnion()])
    s = rule.scores(np.zeros((2, 1)), [0.0, 1.0], [0.5, 2.0])
    assert np.all(np.isinf(s)) and np.all(s > 0)
