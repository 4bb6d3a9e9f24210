"""Cross-checks of the closed-form likelihoods against the oracles.

:func:`run_checks` returns one :class:`Check` per property; the CLI
``verify`` subcommand prints them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import likelihood as lk
from .aggregate import AggregationKind, agg_multi_instance, agg_similarity, agg_triplet, indicator_distance
from .dists import erf
from .metrics import linear_sum_assignment
from .model import ParamMap, batch_loss_and_grad
from .oracle import (
    enumerate_class_likelihood,
    enumerate_order_probability,
    exhaustive_assignment,
    finite_diff_grad,
    poisson_convolution_pmf,
    quad_rank_gauss,
)

__all__ = ["Check", "run_checks", "gradient_cases", "LOSS_CASES"]


@dataclass
class Check:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\tmax_error={self.max_error:.3e}\ttol={self.tolerance:.0e}"


def _simplex(rng, c):
    return rng.dirichlet(np.ones(c))


def check_erf():
    err = 0.0
    for x in np.linspace(-4, 4, 33):
        ref, _ = quad(lambda t: math.exp(-t * t), 0.0, x, epsabs=1e-13, epsrel=1e-12)
        err = max(err, abs(float(erf(x)) - 2.0 / math.sqrt(math.pi) * ref))
    return Check("erf_vs_quadrature", err, 1e-10)


def check_classification(rng, n=50):
    sim = tri = mil = 0.0
    for i in range(n):
        c = (2, 3, 5)[i % 3]
        p1, p2, p3 = (_simplex(rng, c) for _ in range(3))
        d = indicator_distance(c)
        for y in (0, 1):
            val = lk.sim_prob(p1, p2)[0]
            val = val if y else 1 - val
            ref = enumerate_class_likelihood([p1, p2], lambda z: agg_similarity(*z), y)
            sim = max(sim, abs(val - ref))
            val = lk.triplet_prob(p1, p2, p3, d)[0]
            val = val if y else 1 - val
            ref = enumerate_class_likelihood([p1, p2, p3], lambda z: agg_triplet(*z, d), y)
            tri = max(tri, abs(val - ref))
        k = 1 + i % 3
        ps = np.array([_simplex(rng, c) for _ in range(k)])
        pos = int(rng.integers(c))
        val = lk.multi_instance_prob(ps, pos)[0]
        ref = enumerate_class_likelihood(ps, lambda z: agg_multi_instance(z, pos), 1)
        mil = max(mil, abs(val - ref))
    return [
        Check("similarity_vs_enumeration", sim, 1e-12),
        Check("triplet_vs_enumeration", tri, 1e-12),
        Check("multi_instance_vs_enumeration", mil, 1e-12),
    ]


def check_two_ninths():
    u = np.full(3, 1 / 3)
    val = lk.triplet_prob(u, u, u, indicator_distance(3))[0]
    return Check("triplet_uniform_c3_is_2/9", abs(val - 2 / 9), 1e-12)


def check_rank_gauss(rng, n=20):
    err = 0.0
    for _ in range(n):
        mu1, mu2 = rng.normal(0, 2, size=2)
        s1, s2 = rng.uniform(0.3, 2.0, size=2)
        err = max(err, abs(float(lk.rank_gauss_prob(mu1, mu2, s1, s2)[0]) - quad_rank_gauss(mu1, mu2, s1, s2)))
    return Check("rank_gauss_vs_2d_quadrature", err, 1e-6)


def check_listwise(rng, n=20):
    err = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 6))
        s = rng.normal(size=k)
        order = rng.permutation(k)
        p, total = enumerate_order_probability(s, order)
        nll = float(lk.listwise_gumbel_nll(s[order]).nll)
        err = max(err, abs(math.exp(-nll) - p), abs(total - 1.0))
    return Check("listwise_vs_order_enumeration", err, 1e-10)


def check_poisson(rng, n=20):
    err = 0.0
    for _ in range(n):
        lam = rng.uniform(0.2, 4.0, size=int(rng.integers(1, 4)))
        y = int(rng.integers(0, 12))
        err = max(err, abs(math.exp(-float(lk.sum_poisson_nll(y, lam).nll)) - poisson_convolution_pmf(lam, y)))
    return Check("sum_poisson_vs_convolution", err, 1e-9)


def check_assignment(rng, n=100):
    err = 0.0
    for _ in range(n):
        cost = rng.normal(size=(5, 5))
        perm = linear_sum_assignment(cost)
        _, best = exhaustive_assignment(cost)
        err = max(err, abs(cost[np.arange(5), perm].sum() - best))
    return Check("hungarian_vs_exhaustive", err, 1e-12)


# (aggregation tag, family, set size)
LOSS_CASES = [
    ("similarity", None, 2),
    ("triplet", None, 3),
    ("multi_instance", None, 3),
    ("mean", "gauss", 4),
    ("mean", "cauchy", 4),
    ("sum", "poisson", 3),
    ("rank_pair", "gauss", 2),
    ("rank_pair", "gumbel", 2),
    ("rank_pair", "cauchy", 2),
    ("rank_pair", "exponential", 2),
    ("rank_list", "gumbel", 4),
]


def _kind(tag, k, n_classes):
    if tag == "triplet":
        return AggregationKind.triplet(n_classes)
    if tag in ("similarity", "rank_pair"):
        return AggregationKind(tag)
    return AggregationKind(tag, k=k)


def _observations(rng, kind, b):
    if kind.is_classification or kind.tag == "rank_pair":
        return rng.integers(0, 2, size=b)
    if kind.tag == "mean":
        return rng.normal(size=b)
    if kind.tag == "sum":
        return rng.integers(0, 8, size=b)
    return np.array([rng.permutation(kind.k) for _ in range(b)])


def _min_preactivation(pmap, X):
    h, gap = X, math.inf
    for W, b in pmap.layers()[:-1]:
        h = h @ W + b
        gap = min(gap, float(np.min(np.abs(h))))
        h = np.maximum(h, 0.0)
    return gap


def gradient_cases(rng, tag, family, k, arch, n=20, n_classes=3, dim=4, batch=4, kink_margin=1e-3):
    """Relative errors ``|analytic - finite difference| / |finite difference|`` for ``n`` random instances.

    MLP instances with a ReLU input closer than ``kink_margin`` to zero are
    redrawn; central differences are meaningless across the kink.
    """
    kind = _kind(tag, k, n_classes)
    loss = lk.AggregateLoss(kind, family, sigma=0.8)
    out = n_classes if kind.is_classification else 1
    sizes = [dim, out] if arch == "linear" else [dim, 8, out]
    errors = []
    while len(errors) < n:
        pmap = ParamMap(sizes, head=loss.head, seed=int(rng.integers(2**31)))
        pmap.weights = pmap.weights + 0.3 * rng.normal(size=pmap.n_params)
        X = rng.normal(size=(batch, kind.k, dim))
        if arch != "linear" and _min_preactivation(pmap, X.reshape(-1, dim)) < kink_margin:
            continue
        y = _observations(rng, kind, batch)
        _, g = batch_loss_and_grad(pmap, loss, X, y)
        fd = finite_diff_grad(lambda w: batch_loss_and_grad(pmap.with_weights(w), loss, X, y)[0], pmap.weights)
        errors.append(float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)))
    return errors


def check_gradients(rng, n=20):
    out = []
    for tag, family, k in LOSS_CASES:
        for arch in ("linear", "mlp"):
            errs = gradient_cases(rng, tag, family, k, arch, n=n)
            out.append(Check(f"gradient_{tag}_{family or 'categorical'}_{arch}", max(errs), 1e-4))
    return out


def run_checks(seed=0, gradient_instances=20) -> list[Check]:
    rng = np.random.Generator(np.random.PCG64(seed))
    checks = [check_erf(), check_two_ninths()]
    checks += check_classification(rng)
    checks += [check_rank_gauss(rng), check_listwise(rng), check_poisson(rng), check_assignment(rng)]
    checks += check_gradients(rng, gradient_instances)
    return checks
