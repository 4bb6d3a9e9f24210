"""Closed-form aggregate likelihoods and their gradients.

Each ``*_prob`` function returns the probability of the positive
observation together with its partial derivatives; each ``*_nll`` function
returns a :class:`LossResult`. All of them broadcast over leading batch
axes, so the same code scores one example or a whole minibatch.

:class:`AggregateLoss` binds an aggregation kind to a target distribution
family and is what the model and trainer consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregateExample, AggregationKind
from .dists import erf, erf_deriv, log_erfc, log_erfc_deriv, logistic, poisson_log_pmf

__all__ = [
    "P_CLAMP",
    "LossResult",
    "sim_prob",
    "triplet_prob",
    "multi_instance_prob",
    "binary_nll",
    "mean_gauss_nll",
    "mean_cauchy_nll",
    "sum_poisson_nll",
    "rank_gauss_prob",
    "rank_gumbel_prob",
    "rank_cauchy_prob",
    "rank_exponential_prob",
    "listwise_gumbel_nll",
    "FAMILIES",
    "AggregateLoss",
    "aggregate_nll",
]

P_CLAMP = 1e-12


@dataclass
class LossResult:
    """Negative log-likelihood and its gradient w.r.t. the per-instance parameters.

    ``grad_scale`` is only filled by losses that also depend on a scale
    parameter per instance (mean-Cauchy).
    """

    nll: np.ndarray
    grad: np.ndarray
    grad_scale: np.ndarray | None = None


def _simplex(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        raise ValueError(f"{name} must be a probability vector")
    return p


def sim_prob(p1, p2):
    """Probability that two instances share a class."""
    p1, p2 = _simplex(p1, "p1"), _simplex(p2, "p2")
    if p1.shape[-1] != p2.shape[-1]:
        raise ValueError("class counts differ")
    return np.sum(p1 * p2, axis=-1), (np.broadcast_to(p2, p1.shape).copy(), np.broadcast_to(p1, p2.shape).copy())


def triplet_prob(p1, p2, p3, distance):
    """Probability that the anchor ``p1`` is strictly closer to ``p2`` than to ``p3``.

    Direct O(C^3) contraction against the indicator tensor
    ``[d(i, j) < d(i, k)]``; each gradient fixes one index and sums the
    partner marginals.
    """
    p1, p2, p3 = (_simplex(p, n) for p, n in ((p1, "p1"), (p2, "p2"), (p3, "p3")))
    d = np.asarray(distance, dtype=float)
    c = d.shape[0]
    if not (p1.shape[-1] == p2.shape[-1] == p3.shape[-1] == c):
        raise ValueError("class counts of simplices and distance matrix differ")
    m = (d[:, :, None] < d[:, None, :]).astype(float)
    prob = np.einsum("ijk,...i,...j,...k->...", m, p1, p2, p3)
    g1 = np.einsum("ijk,...j,...k->...i", m, p2, p3)
    g2 = np.einsum("ijk,...i,...k->...j", m, p1, p3)
    g3 = np.einsum("ijk,...i,...j->...k", m, p1, p2)
    return prob, (g1, g2, g3)


def multi_instance_prob(ps, positive_class=1):
    """Probability that a set of ``K`` instances (axis -2) has a positive member."""
    ps = np.asarray(ps, dtype=float)
    if ps.ndim < 2 or ps.shape[-2] == 0:
        raise ValueError("need a nonempty set of class probability vectors")
    q = 1.0 - ps[..., positive_class]
    # product of the others without dividing by q
    ones = np.ones(q.shape[:-1] + (1,))
    before = np.cumprod(np.concatenate([ones, q[..., :-1]], axis=-1), axis=-1)
    after = np.cumprod(np.concatenate([ones, q[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    others = before * after
    prob = 1.0 - np.prod(q, axis=-1)
    grad = np.zeros_like(ps)
    grad[..., positive_class] = others
    return prob, grad


def binary_nll(p, y, dp=None):
    """Binary cross entropy of a modelled probability ``p`` for bit ``y``.

    ``dp`` holds derivatives of ``p``; it is multiplied through with the
    batch axes of ``p`` broadcast against its trailing axes.
    """
    p = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=float)
    nll = -y * np.log(p) - (1.0 - y) * np.log1p(-p)
    dnll = -y / p + (1.0 - y) / (1.0 - p)
    if dp is None:
        return LossResult(nll, dnll)
    dp = np.asarray(dp, dtype=float)
    extra = dp.ndim - dnll.ndim
    return LossResult(nll, dnll.reshape(dnll.shape + (1,) * extra) * dp)


def mean_gauss_nll(y, mus, sigma=1.0):
    """Squared error between ``y`` and the mean of the set's predicted locations.

    The Gaussian log-normaliser and variance factor are dropped, which
    leaves the argmin unchanged; ``sigma`` is validated only.
    """
    if sigma <= 0:
        raise ValueError("sigma must be strictly positive")
    mus = np.asarray(mus, dtype=float)
    k = mus.shape[-1]
    if k == 0:
        raise ValueError("empty set")
    r = np.asarray(y, dtype=float) - mus.mean(axis=-1)
    grad = np.broadcast_to((-2.0 / k * r)[..., None], mus.shape).copy()
    return LossResult(r * r, grad)


def mean_cauchy_nll(y, locs, scales):
    """Cauchy negative log density of ``y`` for the set mean.

    The mean of independent Cauchy variables is Cauchy with the averaged
    location and averaged scale.
    """
    locs = np.asarray(locs, dtype=float)
    scales = np.broadcast_to(np.asarray(scales, dtype=float), locs.shape)
    if np.any(scales <= 0):
        raise ValueError("scales must be strictly positive")
    k = locs.shape[-1]
    a = locs.mean(axis=-1)
    b = scales.mean(axis=-1)
    r = (np.asarray(y, dtype=float) - a) / b
    nll = np.log(math.pi * b) + np.log1p(r * r)
    d_a = -2.0 * r / (b * (1.0 + r * r))
    d_b = 1.0 / b - 2.0 * r * r / (b * (1.0 + r * r))
    g_a = np.broadcast_to((d_a / k)[..., None], locs.shape).copy()
    g_b = np.broadcast_to((d_b / k)[..., None], locs.shape).copy()
    return LossResult(nll, g_a, g_b)


def sum_poisson_nll(y, lambdas):
    """Poisson negative log pmf of the count ``y`` under the summed rate."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise ValueError("rates must be strictly positive")
    total = lambdas.sum(axis=-1)
    nll = -poisson_log_pmf(y, total)
    g = 1.0 - np.asarray(y, dtype=float) / total
    return LossResult(nll, np.broadcast_to(g[..., None], lambdas.shape).copy())


def rank_gauss_prob(mu1, mu2, sigma1=1.0, sigma2=None):
    """``p(Z1 > Z2)`` for independent Gaussians.

    With ``sigma2=None`` both share ``sigma1`` and the argument of erf is
    ``(mu1 - mu2) / (2 sigma)``. Returns the probability and the gradients
    ``(d_mu1, d_mu2, d_sigma1, d_sigma2)``; in the shared case the two
    sigma gradients are equal halves of the total.
    """
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    s2 = sigma1 if sigma2 is None else sigma2
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise ValueError("sigma must be strictly positive")
    if sigma2 is None:
        scale = 2.0 * s1
    else:
        scale = np.sqrt(2.0 * (s1 * s1 + s2 * s2))
    diff = mu1 - mu2
    u = diff / scale
    p = 0.5 * (1.0 + erf(u))
    dp_du = 0.5 * erf_deriv(u)
    d_mu = dp_du / scale
    # d scale / d sigma_i = 2 sigma_i / scale
    d_scale = -dp_du * u / scale
    return p, (d_mu, -d_mu, d_scale * 2.0 * s1 / scale, d_scale * 2.0 * s2 / scale)


def rank_gumbel_prob(s1, s2):
    """``p(Z1 > Z2)`` for unit-scale Gumbel scores, the logistic of the gap."""
    p = logistic(np.asarray(s1, dtype=float) - np.asarray(s2, dtype=float))
    g = p * (1.0 - p)
    return p, (g, -g)


def rank_cauchy_prob(a1, a2, b1=1.0, b2=1.0):
    """``p(Z1 > Z2)`` for independent Cauchy variables.

    Gradients are ``(d_a1, d_a2, d_b1, d_b2)``.
    """
    b = np.asarray(b1, dtype=float) + np.asarray(b2, dtype=float)
    if np.any(np.asarray(b1) <= 0) or np.any(np.asarray(b2) <= 0):
        raise ValueError("scales must be strictly positive")
    t = (np.asarray(a1, dtype=float) - np.asarray(a2, dtype=float)) / b
    p = np.arctan(t) / math.pi + 0.5
    dt = 1.0 / (math.pi * (1.0 + t * t))
    d_a = dt / b
    d_b = -dt * t / b
    return p, (d_a, -d_a, d_b, d_b)


def rank_exponential_prob(lambda1, lambda2):
    """``p(Z1 > Z2) = lambda2 / (lambda1 + lambda2)`` for exponential variables."""
    l1 = np.asarray(lambda1, dtype=float)
    l2 = np.asarray(lambda2, dtype=float)
    if np.any(l1 <= 0) or np.any(l2 <= 0):
        raise ValueError("rates must be strictly positive")
    tot = l1 + l2
    return l2 / tot, (-l2 / (tot * tot), l1 / (tot * tot))


def _rank_pair_log_nll(family, a, b, y, sigma):
    # log-space pair likelihood: the probability's lower tail is kept exactly
    # instead of being clamped, so the loss stays smooth for badly ordered pairs
    sign = 2.0 * np.asarray(y, dtype=float) - 1.0
    if family == "gauss":
        v = sign * (a - b) / (2.0 * sigma)
        nll = math.log(2.0) - log_erfc(-v)
        d = sign * log_erfc_deriv(-v) / (2.0 * sigma)
    else:
        v = sign * (a - b)
        nll = np.logaddexp(0.0, -v)
        d = -sign * logistic(-v)
    return LossResult(nll, np.stack([d, -d], axis=1)[..., None])


def listwise_gumbel_nll(scores):
    """Plackett-Luce negative log-likelihood of scores given in observed order.

    ``scores[..., 0]`` belongs to the top-ranked item. The probability of
    the order factorises into successive softmax choices over the items
    not yet placed.
    """
    s = np.asarray(scores, dtype=float)
    k = s.shape[-1]
    if k < 2:
        raise ValueError("listwise likelihood needs at least two items")
    # tails[..., i] = logsumexp(s[..., i:])
    tails = np.flip(np.logaddexp.accumulate(np.flip(s, axis=-1), axis=-1), axis=-1)
    nll = -np.sum(s[..., :-1] - tails[..., :-1], axis=-1)
    # softmax of choice i over item j (j >= i), zero for j < i
    i = np.arange(k - 1)[:, None]
    j = np.arange(k)[None, :]
    mask = j >= i
    w = np.where(mask, np.exp(np.where(mask, s[..., None, :] - tails[..., :-1, None], -np.inf)), 0.0)
    grad = w.sum(axis=-2)
    grad[..., :-1] -= 1.0
    return LossResult(nll, grad)


# aggregation tag -> allowed families, first is the default
FAMILIES = {
    "similarity": ("categorical",),
    "triplet": ("categorical",),
    "multi_instance": ("categorical",),
    "mean": ("gauss", "cauchy"),
    "sum": ("poisson",),
    "rank_pair": ("gauss", "gumbel", "cauchy", "exponential"),
    "rank_list": ("gumbel",),
}

_HEADS = {
    "categorical": "softmax",
    "gauss": "identity",
    "cauchy": "identity",
    "gumbel": "identity",
    "poisson": "exp",
    "exponential": "exp",
}


@dataclass(frozen=True)
class AggregateLoss:
    """Negative log-likelihood of aggregate observations under one target family.

    ``sigma`` is the shared, fixed scale of the Gaussian and Cauchy models.
    Calling the loss with observations ``y`` and per-instance parameters
    ``theta`` of shape ``(B, K, P)`` returns per-example losses ``(B,)``
    and ``d nll / d theta`` of shape ``(B, K, P)``.
    """

    kind: AggregationKind
    family: str | None = None
    sigma: float = 1.0

    def __post_init__(self):
        allowed = FAMILIES[self.kind.tag]
        fam = allowed[0] if self.family is None else self.family
        if fam not in allowed:
            raise ValueError(f"{self.kind.tag} observations support families {allowed}, got {fam!r}")
        object.__setattr__(self, "family", fam)
        if self.sigma <= 0:
            raise ValueError("sigma must be strictly positive")

    @property
    def head(self) -> str:
        return _HEADS[self.family]

    def __call__(self, y, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 3 or theta.shape[1] != self.kind.k:
            raise ValueError(f"theta must have shape (B, {self.kind.k}, P), got {theta.shape}")
        y = np.asarray(y)
        tag, fam = self.kind.tag, self.family

        if tag == "similarity":
            p, (g1, g2) = sim_prob(theta[:, 0], theta[:, 1])
            res = binary_nll(p, y, np.stack([g1, g2], axis=1))
        elif tag == "triplet":
            if theta.shape[2] != self.kind.distance.shape[0]:
                raise ValueError("class count does not match the distance matrix")
            p, gs = triplet_prob(theta[:, 0], theta[:, 1], theta[:, 2], self.kind.distance)
            res = binary_nll(p, y, np.stack(gs, axis=1))
        elif tag == "multi_instance":
            p, g = multi_instance_prob(theta, self.kind.positive_class)
            res = binary_nll(p, y, g)
        elif tag == "mean":
            loc = theta[..., 0]
            if fam == "gauss":
                res = mean_gauss_nll(y, loc, self.sigma)
            else:
                res = mean_cauchy_nll(y, loc, self.sigma)
            res = LossResult(res.nll, res.grad[..., None])
        elif tag == "sum":
            res = sum_poisson_nll(y, theta[..., 0])
            res = LossResult(res.nll, res.grad[..., None])
        elif tag == "rank_pair":
            a, b = theta[:, 0, 0], theta[:, 1, 0]
            if fam in ("gauss", "gumbel"):
                res = _rank_pair_log_nll(fam, a, b, y, self.sigma)
                return res.nll, res.grad
            if fam == "cauchy":
                p, (ga, gb, _, _) = rank_cauchy_prob(a, b, self.sigma, self.sigma)
            else:
                p, (ga, gb) = rank_exponential_prob(a, b)
            res = binary_nll(p, y, np.stack([ga, gb], axis=1)[..., None])
        else:
            perm = y.astype(np.int64)
            if perm.shape != theta.shape[:2]:
                raise ValueError("rank_list observations must be permutations of shape (B, K)")
            ordered = np.take_along_axis(theta[..., 0], perm, axis=1)
            lr = listwise_gumbel_nll(ordered)
            grad = np.empty_like(lr.grad)
            np.put_along_axis(grad, perm, lr.grad, axis=1)
            res = LossResult(lr.nll, grad[..., None])
        return res.nll, res.grad


def aggregate_nll(loss: AggregateLoss, example: AggregateExample, thetas) -> LossResult:
    """Loss and parameter gradient for a single example."""
    if example.kind != loss.kind:
        raise ValueError("example and loss disagree on the aggregation kind")
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    nll, grad = loss(np.asarray(example.observation)[None], thetas[None])
    return LossResult(nll[0], grad[0])
