"""Brute-force and numerical references for cross-checking the likelihoods.

Nothing here imports :mod:`aggmle.likelihood` or :mod:`aggmle.dists`; the
references are computed by enumeration, quadrature and plain
differencing so that agreement actually means something.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

__all__ = [
    "ENUMERATION_BUDGET",
    "enumerate_class_likelihood",
    "enumerate_order_probability",
    "quad_rank_gauss",
    "finite_diff_grad",
    "exhaustive_assignment",
    "poisson_convolution_pmf",
]

ENUMERATION_BUDGET = 10**6


def enumerate_class_likelihood(ps, aggregate: Callable, y) -> float:
    """``sum over z in C^K of prod_i ps[i][z_i] * [aggregate(z) == y]``."""
    ps = [np.asarray(p, dtype=float) for p in ps]
    sizes = [len(p) for p in ps]
    if math.prod(sizes) > ENUMERATION_BUDGET:
        raise ValueError("enumeration budget exceeded")
    total = 0.0
    for zs in itertools.product(*(range(c) for c in sizes)):
        if aggregate(zs) == y:
            w = 1.0
            for p, z in zip(ps, zs):
                w *= p[z]
            total += w
    return total


def enumerate_order_probability(scores, order) -> tuple[float, float]:
    """Plackett-Luce probability of ``order`` and the total over all K! orders.

    Each order's probability is the product of successive top choices
    ``exp(s_j) / sum of exp(s) over the remaining items``.
    """
    w = [math.exp(s) for s in scores]
    k = len(w)
    if k > 8:
        raise ValueError("order enumeration is limited to K <= 8")

    def prob(perm):
        remaining = sum(w)
        out = 1.0
        for j in perm[:-1]:
            out *= w[j] / remaining
            remaining -= w[j]
        return out

    total = sum(prob(p) for p in itertools.permutations(range(k)))
    return prob(tuple(order)), total


def _gauss_pdf(z, mu, sigma):
    return np.exp(-0.5 * ((z - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def _gl_panels(lo, hi, panels, nodes, x, w):
    # composite Gauss-Legendre nodes/weights on [lo, hi]; lo, hi may be arrays
    lo = np.asarray(lo, dtype=float)[..., None, None]
    hi = np.asarray(hi, dtype=float)[..., None, None]
    edges = np.linspace(0.0, 1.0, panels + 1)
    a = lo + (hi - lo) * edges[:-1, None]
    b = lo + (hi - lo) * edges[1:, None]
    pts = 0.5 * (a + b) + 0.5 * (b - a) * x
    wts = 0.5 * (b - a) * w
    shape = pts.shape[:-2] + (panels * nodes,)
    return pts.reshape(shape), wts.reshape(shape)


def quad_rank_gauss(mu1, mu2, sigma1, sigma2, panels=48, nodes=20) -> float:
    """``P(Z1 > Z2)`` by 2-D quadrature of the joint normal density over the half-plane.

    Both axes are truncated to ``mu +- 8 sigma``; the inner integral over
    ``z1`` starts exactly at the ``z1 = z2`` boundary.
    """
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("sigma must be strictly positive")
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo1, hi1 = mu1 - 8 * sigma1, mu1 + 8 * sigma1
    z2, w2 = _gl_panels(mu2 - 8 * sigma2, mu2 + 8 * sigma2, panels, nodes, x, w)
    start = np.clip(z2, lo1, hi1)
    z1, w1 = _gl_panels(start, np.full_like(start, hi1), panels, nodes, x, w)
    inner = np.sum(w1 * _gauss_pdf(z1, mu1, sigma1), axis=-1)
    return float(np.sum(w2 * _gauss_pdf(z2, mu2, sigma2) * inner))


def finite_diff_grad(f: Callable, point, eps=None) -> np.ndarray:
    """Central differences with step ``eps_i = 1e-5 * max(1, |w_i|)`` by default."""
    w = np.array(point, dtype=float)
    grad = np.empty_like(w)
    flat_w, flat_g = w.reshape(-1), grad.reshape(-1)
    for i in range(flat_w.size):
        h = eps if eps is not None else 1e-5 * max(1.0, abs(flat_w[i]))
        orig = flat_w[i]
        flat_w[i] = orig + h
        fp = f(w)
        flat_w[i] = orig - h
        fm = f(w)
        flat_w[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite evaluation at coordinate {i}")
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


def exhaustive_assignment(cost) -> tuple[tuple[int, ...], float]:
    """Minimum-cost permutation by full search; ``C <= 8``."""
    cost = np.asarray(cost, dtype=float)
    c = cost.shape[0]
    if cost.shape != (c, c):
        raise ValueError("cost matrix must be square")
    if c > 8:
        raise ValueError("exhaustive search is limited to C <= 8")
    best, best_cost = None, math.inf
    rows = range(c)
    for perm in itertools.permutations(rows):
        total = sum(cost[i, perm[i]] for i in rows)
        if total < best_cost:
            best, best_cost = perm, total
    return best, float(best_cost)


def _poisson_pmf_table(lam, tol=1e-12):
    # pmf values from k=0 until cumulative mass reaches 1 - tol
    vals = [math.exp(-lam)]
    mass = vals[0]
    k = 0
    while mass < 1.0 - tol or k < lam:
        k += 1
        vals.append(math.exp(k * math.log(lam) - lam - math.lgamma(k + 1)))
        mass += vals[-1]
    return np.array(vals)


def poisson_convolution_pmf(lambdas, y) -> float:
    """``P(sum of independent Poisson(lambda_i) == y)`` by convolving truncated pmfs."""
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("rates must be strictly positive")
    pmf = np.array([1.0])
    for lam in lambdas:
        pmf = np.convolve(pmf, _poisson_pmf_table(lam))
    return float(pmf[y]) if y < len(pmf) else 0.0
