import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rounduq import errors, stats
from rounduq.stats import TrialPlan

samples = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60)


def _naive_edf(xs, t):
    return sum(x <= t for x in xs) / len(xs)


@given(samples, st.floats(-2e6, 2e6, allow_nan=False))
def test_edf_matches_counting(xs, t):
    e = stats.edf_build(xs)
    assert e(t) == _naive_edf(xs, t)
    for x in xs:
        assert e(x) == _naive_edf(xs, x)


@given(samples, samples)
def test_excess_matches_brute_force(a, b):
    ea, eb = stats.edf_build(a), stats.edf_build(b)
    brute = max(_naive_edf(a, t) - _naive_edf(b, t) for t in a + b)
    assert math.isclose(stats.edf_excess(ea, eb), brute, abs_tol=1e-15)
    assert stats.edf_dominates(ea, eb, brute)


def test_edf_examples():
    e = stats.edf_build([3.0, 1.0, 2.0, 2.0])
    assert e(0.5) == 0.0 and e(2.0) == 0.75 and e(3.0) == 1.0
    assert np.array_equal(e(np.array([1.0, 2.5])), [0.25, 0.75])
    assert stats.edf_rows(e) == [(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]
    with pytest.raises(errors.EmptySample):
        stats.edf_build([])
    with pytest.raises(errors.ValidationError):
        stats.edf_build([1.0, math.nan])


def test_dominance_direction():
    g = np.random.default_rng(0)
    small = stats.edf_build(g.uniform(0, 1, 5000))
    large = stats.edf_build(g.uniform(0, 2, 5000))
    assert stats.edf_dominates(large, small, 0.02)
    assert not stats.edf_dominates(small, large, 0.02)


def test_acceptance_slack():
    assert math.isclose(stats.acceptance_slack(0.99, 1000), 3 * math.sqrt(0.99 * 0.01 / 1000))
    with pytest.raises(errors.ValidationError):
        stats.acceptance_slack(0.9, 0)


def _experiment(config, gen):
    x = gen.uniform(0, 1)
    return x, config


def _failing(config, gen):
    raise ZeroDivisionError("boom")


def test_run_trials_serial_equals_parallel():
    plan = TrialPlan(40, base_seed=5, config=0.9, target_confidence=0.9)
    a = stats.run_trials(plan, _experiment, jobs=1)
    b = stats.run_trials(plan, _experiment, jobs=3)
    assert np.array_equal(a.errors, b.errors)
    assert a.coverage == np.mean(a.errors <= 0.9)
    assert a.threshold == 0.9 - stats.acceptance_slack(0.9, 40)
    assert a.passes == (a.coverage >= a.threshold)


def test_trial_failure_carries_index():
    with pytest.raises(errors.TrialFailure) as e:
        stats.run_trials(TrialPlan(3, 1), _failing)
    assert e.value.index == 0
    with pytest.raises(errors.ValidationError):
        TrialPlan(0, 1)


def test_map_ordered_preserves_order():
    assert stats.map_ordered(abs, [-3, 2, -1], jobs=2) == [3, 2, 1]
