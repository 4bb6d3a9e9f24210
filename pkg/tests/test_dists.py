import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggmle.dists import (
    cauchy_cdf,
    erf,
    erf_deriv,
    gaussian_cdf,
    log_erfc,
    log_sum_exp,
    logistic,
    poisson_log_pmf,
)

# frozen from scipy.integrate.quad of the defining integrals
ERF_ONE = 0.842700792949715
PHI_ONE = 0.8413447460685431

finite = st.floats(min_value=-6, max_value=6, allow_nan=False)


def test_erf_examples():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(ERF_ONE, abs=1e-9)
    for x in (0.3, 1.7):
        assert erf(-x) == -erf(x)


def test_erf_matches_stdlib_everywhere():
    xs = np.linspace(-9, 9, 20001)
    ref = np.array([math.erf(x) for x in xs])
    assert np.max(np.abs(erf(xs) - ref)) <= 1e-10


@given(finite)
def test_erf_odd_and_bounded(x):
    assert erf(-x) == -erf(x)
    assert abs(erf(x)) <= 1.0


def test_erf_monotone():
    assert np.all(np.diff(erf(np.linspace(-6, 6, 50001))) >= 0)


def test_erf_deriv():
    assert erf_deriv(0.0) == pytest.approx(2 / math.sqrt(math.pi), abs=1e-10)
    assert erf_deriv(10.0) < 1e-40
    h = 1e-5
    assert erf_deriv(0.5) == pytest.approx((erf(0.5 + h) - erf(0.5 - h)) / (2 * h), abs=1e-7)


def test_log_erfc_tail_is_finite():
    assert np.isfinite(log_erfc(40.0))
    assert log_erfc(1.0) == pytest.approx(math.log(math.erfc(1.0)), abs=1e-12)
    assert log_erfc(6.0) == pytest.approx(math.log(math.erfc(6.0)), abs=1e-10)


def test_gaussian_cdf():
    assert gaussian_cdf(2.0, 2.0, 3.0) == pytest.approx(0.5)
    assert gaussian_cdf(4.0, 1.0, 3.0) == pytest.approx(PHI_ONE, abs=1e-6)
    assert gaussian_cdf(1.0 - 50 * 3.0, 1.0, 3.0) < 1e-12
    with pytest.raises(ValueError):
        gaussian_cdf(0.0, 0.0, 0.0)


@given(finite, st.floats(-3, 3), st.floats(0.1, 5))
def test_gaussian_cdf_symmetry(x, mu, sigma):
    assert gaussian_cdf(x, mu, sigma) + gaussian_cdf(2 * mu - x, mu, sigma) == pytest.approx(1.0, abs=1e-12)


def test_logistic():
    assert logistic(0.0) == 0.5
    assert logistic(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    for t in (-5, 0.1, 40):
        assert logistic(t) + logistic(-t) == pytest.approx(1.0, abs=1e-15)
    assert np.isfinite(logistic(np.array([-700.0, 700.0]))).all()


def test_log_sum_exp():
    assert log_sum_exp([2.5]) == 2.5
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))
    with pytest.raises(ValueError):
        log_sum_exp([])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-100, 100))
def test_log_sum_exp_shift(v, c):
    v = np.array(v)
    assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, abs=1e-12)


def test_cauchy_cdf():
    assert cauchy_cdf(1.0, 1.0, 2.0) == 0.5
    assert cauchy_cdf(3.0, 1.0, 2.0) == pytest.approx(0.75)
    assert np.all(np.diff(cauchy_cdf(np.linspace(-100, 100, 1001), 0.3, 0.7)) >= 0)
    with pytest.raises(ValueError):
        cauchy_cdf(0.0, 0.0, -1.0)


def test_poisson_log_pmf():
    assert poisson_log_pmf(0, 3.0) == pytest.approx(-3.0)
    assert poisson_log_pmf(2, 2.0) == pytest.approx(2 * math.log(2) - 2 - math.log(2))
    with pytest.raises(ValueError):
        poisson_log_pmf(-1, 1.0)
    with pytest.raises(ValueError):
        poisson_log_pmf(1, 0.0)


@pytest.mark.parametrize("lam", [0.5, 1.0, 4.0, 10.0])
def test_poisson_normalises(lam):
    k = np.arange(201)
    assert np.exp(poisson_log_pmf(k, lam)).sum() == pytest.approx(1.0, abs=1e-10)
