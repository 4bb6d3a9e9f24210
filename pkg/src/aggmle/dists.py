"""Special functions and distribution primitives shared by the likelihoods.

Everything here is a pure, vectorised numpy function: scalars in give 0-d
results, arrays in give arrays of the broadcast shape.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

__all__ = [
    "PROB_FLOOR",
    "PROB_CEIL",
    "erf",
    "erf_deriv",
    "log_erfc",
    "log_erfc_deriv",
    "gaussian_cdf",
    "logistic",
    "log_sum_exp",
    "cauchy_cdf",
    "poisson_log_pmf",
]

PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-16

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)

# |x| <= _SERIES_CUTOFF uses the all-positive power series, beyond it the
# continued fraction for erfc. Both truncations sit far below 1e-15 there.
_SERIES_CUTOFF = 3.0
_SERIES_TERMS = 60
_CF_DEPTH = 60


def _erf_series(x):
    # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!
    x2 = x * x
    term = x.copy()
    total = x.copy()
    for n in range(_SERIES_TERMS):
        term = term * (2.0 * x2) / (2 * n + 3)
        total = total + term
    return _TWO_OVER_SQRT_PI * np.exp(-x2) * total


def _erfc_cf_denominator(x):
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    f = x.copy()
    for n in range(_CF_DEPTH, 0, -1):
        f = x + (0.5 * n) / f
    return f


def _erfc_cf(x):
    return _INV_SQRT_PI * np.exp(-x * x) / _erfc_cf_denominator(x)


def erf(x):
    """Gauss error function, absolute error below 1e-10 for every finite x.

    Evaluated on ``|x|`` and sign-restored, so ``erf(-x) == -erf(x)`` holds
    bit for bit.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(np.atleast_1d(x))
    out = np.empty_like(ax)
    small = ax <= _SERIES_CUTOFF
    if small.any():
        out[small] = _erf_series(ax[small])
    if (~small).any():
        out[~small] = 1.0 - _erfc_cf(ax[~small])
    out = np.copysign(out, np.atleast_1d(x))
    return out.reshape(x.shape)


def erf_deriv(x):
    """Derivative of :func:`erf`, ``2/sqrt(pi) * exp(-x**2)``."""
    x = np.asarray(x, dtype=float)
    return _TWO_OVER_SQRT_PI * np.exp(-x * x)


def log_erfc(x):
    """``log(1 - erf(x))`` without underflow in the upper tail."""
    x = np.asarray(x, dtype=float)
    xs = np.atleast_1d(x)
    out = np.empty_like(xs)
    tail = xs > _SERIES_CUTOFF
    out[~tail] = np.log1p(-erf(xs[~tail]))
    xt = xs[tail]
    if xt.size:
        out[tail] = -xt * xt - 0.5 * math.log(math.pi) - np.log(_erfc_cf_denominator(xt))
    return out.reshape(x.shape)


def log_erfc_deriv(x):
    """Derivative of :func:`log_erfc`, ``-erf_deriv(x) / erfc(x)``."""
    x = np.asarray(x, dtype=float)
    xs = np.atleast_1d(x)
    out = np.empty_like(xs)
    tail = xs > _SERIES_CUTOFF
    out[~tail] = -erf_deriv(xs[~tail]) / (1.0 - erf(xs[~tail]))
    if tail.any():
        out[tail] = -2.0 * _erfc_cf_denominator(xs[tail])
    return out.reshape(x.shape)


def _check_positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be strictly positive")


def gaussian_cdf(x, mu=0.0, sigma=1.0):
    """Normal CDF, clamped to ``[PROB_FLOOR, PROB_CEIL]``."""
    _check_positive("sigma", sigma)
    x = np.asarray(x, dtype=float)
    p = 0.5 * (1.0 + erf((x - mu) / (sigma * math.sqrt(2.0))))
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def logistic(t):
    """Numerically stable sigmoid ``1 / (1 + exp(-t))``."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(np.atleast_1d(t))
    tt = np.atleast_1d(t)
    pos = tt >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-tt[pos]))
    e = np.exp(tt[~pos])
    out[~pos] = e / (1.0 + e)
    return out.reshape(t.shape)


def log_sum_exp(v, axis=-1):
    """``log(sum(exp(v)))`` along ``axis`` with max-subtraction."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[axis] == 0:
        raise ValueError("log_sum_exp needs a nonempty sequence")
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def cauchy_cdf(x, a=0.0, b=1.0):
    """Cauchy CDF ``arctan((x - a) / b) / pi + 1/2``, clamped like :func:`gaussian_cdf`."""
    _check_positive("b", b)
    x = np.asarray(x, dtype=float)
    p = np.arctan((x - a) / b) / math.pi + 0.5
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def poisson_log_pmf(k, lam):
    """``k log(lam) - lam - log(k!)`` with the factorial through log-gamma."""
    k = np.asarray(k)
    lam = np.asarray(lam, dtype=float)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    if np.any(np.asarray(k) != np.floor(k)):
        raise ValueError("k must be an integer count")
    _check_positive("lambda", lam)
    k = k.astype(float)
    return k * np.log(lam) - lam - gammaln(k + 1.0)
