"""scikit-learn style estimators trained from aggregate observations.

``fit`` takes sets of instances, shaped ``(n_sets, K, n_features)``, and
one observation per set. ``predict`` takes ordinary individual instances,
shaped ``(n_samples, n_features)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .aggregate import AggregateDataset, AggregationKind, indicator_distance
from .likelihood import AggregateLoss
from .metrics import accuracy, permutation_accuracy
from .model import ParamMap
from .train import TrainConfig, fit as fit_weights

__all__ = ["AggregateRegressor", "AggregateClassifier"]


class _AggregateEstimator(BaseEstimator):
    _tags: tuple = ()

    def __init__(
        self,
        aggregation="mean",
        family=None,
        model="linear",
        hidden_layer_sizes=(64,),
        optimizer=None,
        lr=None,
        epochs=None,
        batch_size=None,
        weight_decay=0.01,
        sigma=1.0,
        random_state=0,
        verbose=False,
    ):
        self.aggregation = aggregation
        self.family = family
        self.model = model
        self.hidden_layer_sizes = hidden_layer_sizes
        self.optimizer = optimizer
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.sigma = sigma
        self.random_state = random_state
        self.verbose = verbose

    def _train_config(self):
        base = TrainConfig.linear_defaults if self.model == "linear" else TrainConfig.neural_defaults
        overrides = {
            "optimizer": self.optimizer,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
        }
        kw = {k: v for k, v in overrides.items() if v is not None}
        return base(seed=self.random_state, sigma=self.sigma, weight_decay=self.weight_decay, **kw)

    def _kind(self, k):
        raise NotImplementedError

    def _out_dim(self):
        return 1

    def _validate_sets(self, X, y):
        if isinstance(X, AggregateDataset):
            X, y = X.features, X.observations
        if y is None:
            raise ValueError("observations are required")
        X = check_array(X, dtype=float, allow_nd=True)
        if X.ndim != 3:
            raise ValueError(f"X must hold sets shaped (n_sets, K, n_features), got {X.shape}")
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("one observation per set is required")
        return X, y

    def fit(self, X, y=None):
        """Fit from sets ``X`` of shape ``(n_sets, K, n_features)`` and observations ``y``."""
        X, y = self._validate_sets(X, y)
        if self.aggregation not in self._tags:
            raise ValueError(f"{type(self).__name__} supports aggregations {self._tags}")
        if self.model not in ("linear", "mlp"):
            raise ValueError(f"model must be 'linear' or 'mlp', got {self.model!r}")
        kind = self._kind(X.shape[1])
        loss = AggregateLoss(kind, self.family, self.sigma)
        d = X.shape[2]
        if self.model == "linear":
            pmap = ParamMap.linear(d, self._out_dim(), head=loss.head, seed=self.random_state)
        else:
            pmap = ParamMap.mlp(d, self._out_dim(), self.hidden_layer_sizes, head=loss.head, seed=self.random_state)
        data = AggregateDataset(X, y, kind)
        report = fit_weights(pmap, loss, data, self._train_config(), verbose=self.verbose)
        self.loss_ = loss
        self.param_map_ = pmap.with_weights(report.final_weights)
        self.train_report_ = report
        self.n_features_in_ = d
        return self

    def _params(self, X):
        check_is_fitted(self, "param_map_")
        X = check_array(X, dtype=float)
        return self.param_map_.forward(X)


class AggregateRegressor(RegressorMixin, _AggregateEstimator):
    """Per-instance regressor learned from mean, sum or rank observations.

    ``aggregation`` is one of ``mean``, ``sum``, ``rank_pair``, ``rank_list``
    and ``family`` picks the target distribution (see
    :data:`aggmle.likelihood.FAMILIES`). Models trained on ranks are only
    identified up to an additive constant.
    """

    _tags = ("mean", "sum", "rank_pair", "rank_list")

    def _kind(self, k):
        return AggregationKind(self.aggregation, k=k)

    def predict(self, X):
        """Location (Gaussian, Cauchy), score (Gumbel, exponential) or rate (Poisson) per row."""
        theta = self._params(X)[:, 0]
        if self.loss_.family == "exponential":
            # rate lambda = exp(-score)
            return -np.log(theta)
        return theta


class AggregateClassifier(ClassifierMixin, _AggregateEstimator):
    """Per-instance classifier learned from similarity, triplet or multiple-instance bits.

    Similarity and triplet supervision identify classes only up to a
    relabelling, so ``score`` reports permutation-optimal accuracy for them.
    """

    _tags = ("similarity", "triplet", "multi_instance")

    def __init__(
        self,
        n_classes=2,
        aggregation="similarity",
        distance=None,
        positive_class=1,
        model="linear",
        hidden_layer_sizes=(64,),
        optimizer=None,
        lr=None,
        epochs=None,
        batch_size=None,
        weight_decay=0.01,
        random_state=0,
        verbose=False,
    ):
        super().__init__(
            aggregation=aggregation,
            model=model,
            hidden_layer_sizes=hidden_layer_sizes,
            optimizer=optimizer,
            lr=lr,
            epochs=epochs,
            batch_size=batch_size,
            weight_decay=weight_decay,
            random_state=random_state,
            verbose=verbose,
        )
        self.n_classes = n_classes
        self.distance = distance
        self.positive_class = positive_class

    def _kind(self, k):
        if self.aggregation == "triplet":
            d = indicator_distance(self.n_classes) if self.distance is None else self.distance
            return AggregationKind("triplet", distance=d)
        if self.aggregation == "multi_instance":
            return AggregationKind("multi_instance", k=k, positive_class=self.positive_class)
        return AggregationKind(self.aggregation)

    def _out_dim(self):
        return self.n_classes

    def fit(self, X, y=None):
        super().fit(X, y)
        self.classes_ = np.arange(self.n_classes)
        return self

    def predict_proba(self, X):
        return self._params(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y, sample_weight=None):
        pred = self.predict(X)
        if self.aggregation == "multi_instance":
            return accuracy(pred, np.asarray(y))
        return permutation_accuracy(pred, np.asarray(y), self.n_classes)

