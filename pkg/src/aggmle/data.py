"""Tabular data ingestion, preprocessing and synthetic generators."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = [
    "DataError",
    "TabularDataset",
    "read_schema",
    "load_csv",
    "Standardizer",
    "standardize",
    "SplitSpec",
    "split",
    "make_blobs",
    "make_linear",
]

logger = logging.getLogger(__name__)

COLUMN_ROLES = ("numeric", "categorical", "target")


class DataError(ValueError):
    pass


@dataclass
class TabularDataset:
    features: np.ndarray
    targets: np.ndarray
    columns: list[str] = field(default_factory=list)
    name: str = ""
    rejected: list[tuple[int, str]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> "TabularDataset":
        return replace(self, features=self.features[idx], targets=self.targets[idx], rejected=[])


def read_schema(path) -> dict[str, str]:
    """Parse ``name<TAB>role`` lines; roles are numeric, categorical or target."""
    schema = {}
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in COLUMN_ROLES:
                raise DataError(f"{path}:{lineno}: expected 'name<TAB>{{numeric|categorical|target}}'")
            schema[parts[0]] = parts[1]
    return schema


def load_csv(path, schema: dict[str, str], name: str | None = None, classification=False) -> TabularDataset:
    """Load a headed, comma-separated UTF-8 file.

    Columns missing from ``schema`` are treated as numeric. Categorical
    columns are one-hot expanded with levels in sorted order. Rows with a
    missing or unparsable value are dropped and reported in ``rejected``
    as ``(line number, reason)``.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fp:
            rows = list(csv.reader(fp))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    roles = [schema.get(h, "numeric") for h in header]
    if roles.count("target") != 1:
        raise DataError(f"{path}: schema must name exactly one target column present in the header")
    t_col = roles.index("target")

    parsed, rejected = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            rejected.append((lineno, f"expected {len(header)} fields, got {len(row)}"))
            continue
        cells = [c.strip() for c in row]
        bad = next((header[i] for i, c in enumerate(cells) if c in ("", "?", "NA", "nan")), None)
        if bad is not None:
            rejected.append((lineno, f"missing value in {bad}"))
            continue
        try:
            values = [c if roles[i] == "categorical" or (classification and i == t_col) else float(c)
                      for i, c in enumerate(cells)]
        except ValueError as exc:
            rejected.append((lineno, str(exc)))
            continue
        parsed.append(values)
    for lineno, reason in rejected:
        logger.warning("%s:%d: row dropped (%s)", path, lineno, reason)
    if not parsed:
        raise DataError(f"{path}: no usable rows")

    blocks, columns = [], []
    for i, (h, role) in enumerate(zip(header, roles)):
        if role == "target":
            continue
        col = [r[i] for r in parsed]
        if role == "categorical":
            levels = sorted(set(col))
            onehot = np.zeros((len(col), len(levels)))
            onehot[np.arange(len(col)), [levels.index(v) for v in col]] = 1.0
            blocks.append(onehot)
            columns.extend(f"{h}={lv}" for lv in levels)
        else:
            blocks.append(np.asarray(col, dtype=float)[:, None])
            columns.append(h)
    features = np.hstack(blocks) if blocks else np.zeros((len(parsed), 0))
    target = [r[t_col] for r in parsed]
    if classification:
        levels = sorted(set(target))
        targets = np.asarray([levels.index(v) for v in target], dtype=np.int64)
    else:
        targets = np.asarray(target, dtype=float)
    return TabularDataset(features, targets, columns, name or path.stem, rejected)


class Standardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-std scaling with statistics from the data passed to ``fit``.

    Constant columns are centred only.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_


def standardize(train: TabularDataset, *datasets: TabularDataset, center_targets=True):
    """Scale features (and centre regression targets) of every dataset with ``train``'s statistics.

    Returns the transformed datasets in order, ``train`` first.
    """
    if len(train) == 0:
        raise DataError("empty training split")
    scaler = Standardizer().fit(train.features)
    shift = float(train.targets.mean()) if center_targets else 0.0
    out = []
    for ds in (train, *datasets):
        t = ds.targets - shift if center_targets else ds.targets
        out.append(replace(ds, features=scaler.transform(ds.features), targets=t))
    return out


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-12:
            raise ValueError("split fractions must be positive and sum to one")


def split(dataset: TabularDataset, spec: SplitSpec = SplitSpec()):
    """Random train/validation/test partition; floor sizes, remainder to train."""
    n = len(dataset)
    if n < 3:
        raise DataError("need at least 3 rows to split")
    n_val = int(np.floor(n * spec.validation))
    n_test = int(np.floor(n * spec.test))
    if n_val == 0 or n_test == 0:
        raise DataError(f"{n} rows are too few for the requested split")
    order = np.random.Generator(np.random.PCG64(spec.seed)).permutation(n)
    n_train = n - n_val - n_test
    parts = order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]
    return tuple(dataset.subset(np.sort(p)) for p in parts)


def make_blobs(n_classes=3, n=300, dim=2, spread=5.0, noise=1.0, seed=0) -> TabularDataset:
    """Isotropic Gaussian clusters with balanced classes.

    Centres are uniform in ``[-spread, spread]^dim``; class counts differ
    by at most one.
    """
    if n_classes < 2 or n < n_classes or dim < 1 or noise < 0:
        raise ValueError("invalid blob parameters")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.uniform(-spread, spread, size=(n_classes, dim))
    labels = rng.permutation(np.arange(n) % n_classes)
    X = centers[labels] + noise * rng.standard_normal((n, dim))
    cols = [f"x{i}" for i in range(dim)]
    return TabularDataset(X, labels.astype(np.int64), cols, "blobs", meta={"centers": centers, "noise": noise})


def make_linear(n=1000, dim=5, weights=None, noise=0.1, seed=0) -> TabularDataset:
    """``z = x @ w + noise * eps`` with standard normal features.

    ``weights`` default to a standard normal draw from the same stream.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    w = rng.standard_normal(dim) if weights is None else np.asarray(weights, dtype=float)
    X = rng.standard_normal((n, dim))
    z = X @ w + noise * rng.standard_normal(n)
    return TabularDataset(X, z, [f"x{i}" for i in range(dim)], "linear", meta={"weights": w})
