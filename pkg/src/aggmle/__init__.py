"""Maximum-likelihood learning of per-instance predictors from aggregate observations."""

from .aggregate import AggregateDataset, AggregationKind, make_aggregate_dataset
from .estimator import AggregateClassifier, AggregateRegressor
from .likelihood import AggregateLoss
from .model import ParamMap
from .train import TrainConfig, fit

__all__ = [
    "AggregateClassifier",
    "AggregateDataset",
    "AggregateLoss",
    "AggregateRegressor",
    "AggregationKind",
    "ParamMap",
    "TrainConfig",
    "fit",
    "make_aggregate_dataset",
]
__version__ = "0.1.0"
