"""Evaluation metrics for individually labelled test data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np
from scipy.optimize import linear_sum_assignment as _lsa

__all__ = [
    "linear_sum_assignment",
    "confusion_matrix",
    "accuracy",
    "permutation_accuracy",
    "best_permutation",
    "mse",
    "error_variance",
    "MetricsReport",
    "aggregate_trials",
]


def linear_sum_assignment(cost) -> np.ndarray:
    """Permutation ``perm`` minimising ``sum(cost[i, perm[i]])``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = _lsa(cost)
    perm = np.empty(len(rows), dtype=np.int64)
    perm[rows] = cols
    return perm


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def confusion_matrix(pred, truth, n_classes) -> np.ndarray:
    """Counts with rows indexed by true class and columns by predicted class."""
    pred, truth = _check_pair(pred, truth)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth.astype(np.int64), pred.astype(np.int64)), 1)
    return cm


def accuracy(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(pred == truth))


def best_permutation(pred, truth, n_classes) -> np.ndarray:
    """Relabelling ``perm`` with ``perm[true_class] = predicted_class`` maximising agreement."""
    return linear_sum_assignment(-confusion_matrix(pred, truth, n_classes))


def permutation_accuracy(pred, truth, n_classes) -> float:
    """Accuracy maximised over all relabellings of the predicted classes."""
    cm = confusion_matrix(pred, truth, n_classes)
    perm = linear_sum_assignment(-cm)
    return float(cm[np.arange(n_classes), perm].sum() / cm.sum())


def mse(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    r = pred.astype(float) - truth.astype(float)
    return float(np.mean(r * r))


def error_variance(pred, truth) -> float:
    """MSE after removing the best constant shift, i.e. the population variance of the residuals."""
    pred, truth = _check_pair(pred, truth)
    r = truth.astype(float) - pred.astype(float)
    r = r - r.mean()
    return float(np.mean(r * r))


@dataclass
class MetricsReport:
    """Per-metric mean and sample standard deviation over trials."""

    entries: dict

    def write_tsv(self, fp: IO[str]) -> None:
        for name, (mean, std, _) in self.entries.items():
            fp.write(f"{name}\t{mean:.6f}\t{std:.6f}\n")


def aggregate_trials(values) -> tuple[float, float, int]:
    """``(mean, std, n)`` with the n-1 standard deviation (0 for a single trial)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no trials")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), std, int(v.size)
