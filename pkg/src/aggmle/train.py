"""Minibatch training of a parameter map against an aggregate loss."""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ParamMap, batch_loss_and_grad

__all__ = [
    "TrainConfig",
    "TrainReport",
    "AdamState",
    "sgd_step",
    "adamw_step",
    "epoch_order",
    "fit",
]


@dataclass
class TrainConfig:
    optimizer: str = "sgd"
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    sigma: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def linear_defaults(cls, **kw):
        """Plain SGD, lr 0.1, batch 256, 20 epochs."""
        return cls(**{"optimizer": "sgd", "lr": 0.1, "batch_size": 256, "epochs": 20, **kw})

    @classmethod
    def neural_defaults(cls, **kw):
        """AdamW, lr 1e-3, batch 128, 10 epochs."""
        return cls(**{"optimizer": "adamw", "lr": 1e-3, "batch_size": 128, "epochs": 10, **kw})


@dataclass
class TrainReport:
    loss_per_epoch: list[float] = field(default_factory=list)
    final_weights: np.ndarray | None = None
    wall_time: float = 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def sgd_step(weights, grad, lr):
    weights = np.asarray(weights, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if weights.shape != grad.shape:
        raise ValueError("weights and gradient shapes differ")
    return weights - lr * grad


def adamw_step(state: AdamState, weights, grad, config: TrainConfig):
    """One Adam update with decoupled weight decay; returns ``(state, weights)``.

    The decay shrinks the weights by ``lr * weight_decay`` independently of
    the adaptive step.
    """
    weights = np.asarray(weights, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not (weights.shape == grad.shape == state.m.shape):
        raise ValueError("weights, gradient and optimizer state shapes differ")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    w = weights - config.lr * config.weight_decay * weights
    w = w - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return AdamState(m, v, t), w


def epoch_order(n, seed, epoch):
    """Visiting order for one epoch: a permutation from PCG64 seeded with ``[seed, epoch]``."""
    return np.random.Generator(np.random.PCG64([seed, epoch])).permutation(n)


def fit(pmap: ParamMap, loss, data, config: TrainConfig, verbose=False) -> TrainReport:
    """Optimise the weights of ``pmap`` on an aggregate dataset.

    ``pmap`` itself is left untouched; the trained weights are returned in
    the report. Raises ``FloatingPointError`` if a batch loss or gradient
    becomes non-finite.
    """
    features = np.asarray(data.features, dtype=float)
    observations = np.asarray(data.observations)
    n = len(features)
    if n == 0:
        raise ValueError("empty dataset")
    if features.shape[2] != pmap.in_dim:
        raise ValueError(f"feature dimension {features.shape[2]} does not match the model input {pmap.in_dim}")

    start = time.perf_counter()
    work = pmap.with_weights(pmap.weights.copy())
    state = AdamState.zeros(work.n_params)
    losses = []
    for epoch in range(config.epochs):
        order = epoch_order(n, config.seed, epoch)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            value, grad = batch_loss_and_grad(work, loss, features[idx], observations[idx])
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite loss or gradient in epoch {epoch}")
            total += value * len(idx)
            if config.optimizer == "sgd":
                work.weights = sgd_step(work.weights, grad, config.lr)
            else:
                state, work.weights = adamw_step(state, work.weights, grad, config)
        losses.append(total / n)
        if verbose:
            print(f"epoch {epoch} loss {losses[-1]:.6g}", file=sys.stderr)
    return TrainReport(losses, work.weights, time.perf_counter() - start)
