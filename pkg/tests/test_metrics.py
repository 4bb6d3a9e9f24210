import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggmle.metrics import (
    MetricsReport,
    accuracy,
    aggregate_trials,
    best_permutation,
    confusion_matrix,
    error_variance,
    linear_sum_assignment,
    mse,
    permutation_accuracy,
)
from aggmle.oracle import exhaustive_assignment


def test_assignment_examples():
    assert linear_sum_assignment(1 - np.eye(4)).tolist() == [0, 1, 2, 3]
    perm = linear_sum_assignment([[1.0, 0.0], [0.0, 1.0]])
    assert perm.tolist() == [1, 0]
    with pytest.raises(ValueError):
        linear_sum_assignment(np.zeros((2, 3)))


def test_assignment_matches_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(100):
        cost = rng.normal(size=(5, 5))
        perm = linear_sum_assignment(cost)
        _, best = exhaustive_assignment(cost)
        total = cost[np.arange(5), perm].sum()
        assert abs(total - best) <= 1e-12
        assert total <= np.trace(cost) + 1e-12


def test_permutation_accuracy_examples():
    truth = np.array([0, 1, 2, 2, 1, 0])
    assert permutation_accuracy(truth, truth, 3) == 1.0
    assert permutation_accuracy((truth + 1) % 3, truth, 3) == 1.0
    with pytest.raises(ValueError):
        permutation_accuracy(truth[:-1], truth, 3)


def test_permutation_accuracy_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, truth = rng.integers(0, 3, size=12), rng.integers(0, 3, size=12)
        ref = max(np.mean(np.array(p)[pred] == truth) for p in itertools.permutations(range(3)))
        assert permutation_accuracy(pred, truth, 3) == pytest.approx(ref, abs=1e-15)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.permutations(range(4)))
def test_permutation_accuracy_properties(pairs, perm):
    pred, truth = np.array(pairs).T
    pa = permutation_accuracy(pred, truth, 4)
    assert pa >= accuracy(pred, truth)
    assert permutation_accuracy(np.array(perm)[pred], truth, 4) == pa


def test_confusion_and_best_permutation():
    truth = np.array([0, 0, 1, 1, 2])
    pred = np.array([1, 1, 2, 2, 0])
    cm = confusion_matrix(pred, truth, 3)
    assert cm.sum() == 5 and cm[0, 1] == 2
    assert best_permutation(pred, truth, 3).tolist() == [1, 2, 0]


def test_mse_and_error_variance():
    truth = np.array([1.0, -2.0, 0.5, 3.0])
    assert mse(truth + 5.0, truth) == pytest.approx(25.0)
    assert error_variance(truth + 5.0, truth) == pytest.approx(0.0, abs=1e-24)
    assert mse(truth, truth) == 0.0 and error_variance(truth, truth) == 0.0
    noise = np.random.default_rng(2).normal(size=1000)
    v = float(np.var(noise))
    assert abs(error_variance(truth.mean() + noise, np.full(1000, truth.mean())) - v) <= 1e-12
    with pytest.raises(ValueError):
        mse([], [])
    with pytest.raises(ValueError):
        error_variance([1.0], [1.0, 2.0])


@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=30).flatmap(
        lambda v: st.tuples(st.just(v), st.lists(st.floats(-100, 100), min_size=len(v), max_size=len(v)))
    ),
    st.floats(-1e3, 1e3),
)
def test_error_variance_shift_invariance(pair, c):
    # bitwise equality is not attainable in floating point; the residual mean
    # absorbs c up to rounding of the largest term
    pred, truth = np.array(pair[0]), np.array(pair[1])
    a = error_variance(pred + c, truth)
    b = error_variance(pred, truth)
    scale = max(1.0, float(np.max(np.abs(pred - truth))) + abs(c))
    assert abs(a - b) <= 1e-12 * scale**2


def test_aggregate_trials():
    assert aggregate_trials([0.7]) == (0.7, 0.0, 1)
    mean, std, n = aggregate_trials([1.0, 3.0])
    assert (mean, n) == (2.0, 2) and std == pytest.approx(np.sqrt(2), abs=1e-15)
    v = np.random.default_rng(3).normal(size=10)
    m = sum(v) / 10
    ref = np.sqrt(sum((x - m) ** 2 for x in v) / 9)
    mean, std, _ = aggregate_trials(v)
    assert abs(mean - m) <= 1e-12 and abs(std - ref) <= 1e-12
    with pytest.raises(ValueError):
        aggregate_trials([])


def test_report_tsv(tmp_path):
    import io

    buf = io.StringIO()
    MetricsReport({"mse": aggregate_trials([1.0, 3.0])}).write_tsv(buf)
    assert buf.getvalue() == "mse\t2.000000\t1.414214\n"
