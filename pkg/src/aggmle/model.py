"""Parameter maps: feature vector -> per-instance distribution parameters.

A :class:`ParamMap` is a stack of affine layers (ReLU between them)
followed by an output head. The weights live in one flat vector so that
optimizers and finite-difference checks can treat them uniformly. Reverse
mode is written out by hand per layer.
"""

from __future__ import annotations

from typing import IO, Sequence

import numpy as np

__all__ = [
    "HEADS",
    "SOFTMAX_FLOOR",
    "ParamMap",
    "init_weights",
    "batch_loss_and_grad",
    "save_checkpoint",
    "load_checkpoint",
]

HEADS = ("softmax", "identity", "exp")
SOFTMAX_FLOOR = 1e-12
_MAGIC = "aggmle-parammap-v1"


def _n_params(sizes):
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def init_weights(layer_sizes: Sequence[int], seed: int = 0) -> np.ndarray:
    """Glorot-uniform weights, zero biases, drawn from PCG64(seed) layer by layer."""
    rng = np.random.Generator(np.random.PCG64(seed))
    chunks = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


class ParamMap:
    """Linear model or MLP with an output head.

    ``layer_sizes`` is ``[D, hidden..., out]``; a two-entry list is a
    linear model. Heads: ``softmax`` gives class probabilities floored
    away from zero, ``identity`` gives locations or scores, ``exp`` gives
    positive rates.
    """

    def __init__(self, layer_sizes, head="identity", weights=None, seed=0):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {layer_sizes}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if head == "softmax" and sizes[-1] < 2:
            raise ValueError("softmax head needs at least two outputs")
        self.layer_sizes = sizes
        self.head = head
        if weights is None:
            weights = init_weights(sizes, seed)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (_n_params(sizes),):
            raise ValueError(f"expected {_n_params(sizes)} weights, got shape {weights.shape}")
        self.weights = weights

    @classmethod
    def linear(cls, d, out=1, head="identity", **kw):
        return cls([d, out], head=head, **kw)

    @classmethod
    def mlp(cls, d, out=1, hidden=(64,), head="identity", **kw):
        return cls([d, *hidden, out], head=head, **kw)

    @property
    def n_params(self) -> int:
        return _n_params(self.layer_sizes)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def __repr__(self):
        return f"ParamMap(layer_sizes={self.layer_sizes}, head={self.head!r})"

    def with_weights(self, weights) -> "ParamMap":
        return ParamMap(self.layer_sizes, self.head, weights=weights)

    def layers(self, weights=None):
        """``(W, b)`` views into the flat weight vector, ``W`` shaped ``(in, out)``."""
        w = self.weights if weights is None else weights
        out, pos = [], 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            out.append((w[pos : pos + a * b].reshape(a, b), w[pos + a * b : pos + a * b + b]))
            pos += a * b + b
        return out

    def _check_x(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ValueError(f"expected feature dimension {self.in_dim}, got shape {X.shape}")
        return X, single

    def _forward(self, X):
        acts = [X]
        h = X
        layers = self.layers()
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        z = acts[-1]
        if self.head == "softmax":
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            s = e / e.sum(axis=1, keepdims=True)
            c = s.shape[1]
            theta = (s + SOFTMAX_FLOOR) / (1.0 + c * SOFTMAX_FLOOR)
            aux = s
        elif self.head == "exp":
            theta = np.exp(z)
            aux = theta
        else:
            theta = z
            aux = None
        return theta, (acts, aux)

    def _backward(self, cache, dtheta):
        acts, aux = cache
        g = np.asarray(dtheta, dtype=float)
        if self.head == "softmax":
            c = aux.shape[1]
            g = g / (1.0 + c * SOFTMAX_FLOOR)
            g = aux * (g - np.sum(g * aux, axis=1, keepdims=True))
        elif self.head == "exp":
            g = g * aux
        layers = self.layers()
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            if i < len(layers) - 1:
                g = g * (acts[i + 1] > 0)
            grads.append((acts[i].T @ g).ravel())
            grads.append(g.sum(axis=0))
            if i > 0:
                g = g @ W.T
        # grads were collected last layer first as (W, b) pairs
        pairs = [grads[j : j + 2] for j in range(0, len(grads), 2)][::-1]
        return np.concatenate([np.concatenate(p) for p in pairs])

    def forward(self, X) -> np.ndarray:
        """Parameters for each row of ``X`` (or for a single vector)."""
        X, single = self._check_x(X)
        theta, _ = self._forward(X)
        return theta[0] if single else theta

    def backward(self, X, dtheta) -> np.ndarray:
        """``d loss / d weights`` given ``d loss / d theta`` for each row of ``X``."""
        X, single = self._check_x(X)
        dtheta = np.asarray(dtheta, dtype=float)
        if single:
            dtheta = dtheta[None]
        if dtheta.shape != (len(X), self.out_dim):
            raise ValueError(f"dtheta must have shape {(len(X), self.out_dim)}, got {dtheta.shape}")
        _, cache = self._forward(X)
        return self._backward(cache, dtheta)


def batch_loss_and_grad(pmap: ParamMap, loss, features, observations):
    """Mean loss over a batch of sets and its gradient w.r.t. the weights."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 3 or len(features) == 0:
        raise ValueError("need a nonempty batch shaped (B, K, D)")
    b, k, d = features.shape
    theta, cache = pmap._forward(features.reshape(b * k, d))
    nll, g = loss(observations, theta.reshape(b, k, -1))
    grad = pmap._backward(cache, g.reshape(b * k, -1) / b)
    return float(np.mean(nll)), grad


def save_checkpoint(pmap: ParamMap, fp: IO[str]) -> None:
    """Text checkpoint: a descriptor line, then one float per line in hex (bit exact)."""
    sizes = ",".join(str(s) for s in pmap.layer_sizes)
    fp.write(f"{_MAGIC} sizes={sizes} head={pmap.head}\n")
    for v in pmap.weights:
        fp.write(float(v).hex() + "\n")


def load_checkpoint(fp: IO[str]) -> ParamMap:
    header = fp.readline().split()
    if not header or header[0] != _MAGIC:
        raise ValueError("not a parameter map checkpoint")
    fields = dict(item.split("=", 1) for item in header[1:])
    sizes = [int(s) for s in fields["sizes"].split(",")]
    weights = np.array([float.fromhex(line) for line in fp if line.strip()])
    return ParamMap(sizes, head=fields["head"], weights=weights)
