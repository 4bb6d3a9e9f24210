"""Aggregate functions and synthesis of aggregate datasets.

An aggregate function maps the true targets ``z_1..z_K`` of a set of
instances to a single observation ``y``. Class indices are 0-based and
permutations are 0-based index tuples throughout.

Randomness comes from numpy's PCG64 bit generator
(``np.random.Generator(np.random.PCG64(seed))``). For a given seed the
draw sequence is: for every set attempt, ``rng.integers(0, n, size=K)``.
A set whose observation is undefined (tied ranks) is redrawn, so the
stream, and hence the dataset, is a pure function of the inputs and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterator, Sequence

import numpy as np

__all__ = [
    "TAGS",
    "Resample",
    "RetryExhausted",
    "AggregationKind",
    "AggregateExample",
    "AggregateDataset",
    "indicator_distance",
    "agg_similarity",
    "agg_triplet",
    "agg_multi_instance",
    "agg_mean",
    "agg_sum",
    "agg_rank_pair",
    "agg_rank_list",
    "apply_aggregate",
    "make_aggregate_dataset",
    "write_dump",
    "read_dump",
]

TAGS = ("similarity", "triplet", "multi_instance", "mean", "sum", "rank_pair", "rank_list")
CLASSIFICATION_TAGS = ("similarity", "triplet", "multi_instance")
_FIXED_K = {"similarity": 2, "rank_pair": 2, "triplet": 3}
_DEFAULT_K = {"mean": 4, "sum": 4, "multi_instance": 4, "rank_list": 4}

MAX_RETRIES = 1000


class Resample(ValueError):
    """The drawn set has no defined observation (tied ranks); draw again."""


class RetryExhausted(RuntimeError):
    pass


def indicator_distance(n_classes: int) -> np.ndarray:
    """Class distance ``d(i, j) = [i != j]``."""
    return 1.0 - np.eye(n_classes)


@dataclass(frozen=True, eq=False)
class AggregationKind:
    """Which aggregate function produced the observations, and its arity.

    ``distance`` is the class distance matrix and is only meaningful for
    triplets; ``positive_class`` is only meaningful for multiple-instance
    sets.
    """

    tag: str
    k: int | None = None
    distance: np.ndarray | None = None
    positive_class: int = 1

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown aggregation {self.tag!r}; expected one of {TAGS}")
        k = self.k
        if self.tag in _FIXED_K:
            if k is not None and k != _FIXED_K[self.tag]:
                raise ValueError(f"{self.tag} sets have exactly {_FIXED_K[self.tag]} members")
            k = _FIXED_K[self.tag]
        elif k is None:
            k = _DEFAULT_K[self.tag]
        min_k = 2 if self.tag == "rank_list" else 1
        if k < min_k:
            raise ValueError(f"set size must be at least {min_k} for {self.tag}, got {k}")
        object.__setattr__(self, "k", int(k))
        if self.tag == "triplet":
            if self.distance is None:
                raise ValueError("triplet aggregation needs a class distance matrix")
            d = np.asarray(self.distance, dtype=float)
            if d.ndim != 2 or d.shape[0] != d.shape[1]:
                raise ValueError("distance must be a square matrix")
            if np.any(np.diag(d) != 0):
                raise ValueError("distance must be zero on the diagonal")
            object.__setattr__(self, "distance", d)
        elif self.distance is not None:
            raise ValueError("distance is only used by triplet aggregation")

    @property
    def is_classification(self) -> bool:
        return self.tag in CLASSIFICATION_TAGS

    @property
    def n_classes(self) -> int | None:
        return None if self.distance is None else self.distance.shape[0]

    @classmethod
    def triplet(cls, n_classes: int) -> "AggregationKind":
        return cls("triplet", distance=indicator_distance(n_classes))

    def __eq__(self, other):
        if not isinstance(other, AggregationKind):
            return NotImplemented
        same_d = (self.distance is None and other.distance is None) or (
            self.distance is not None
            and other.distance is not None
            and np.array_equal(self.distance, other.distance)
        )
        return (self.tag, self.k, self.positive_class) == (other.tag, other.k, other.positive_class) and same_d


@dataclass
class AggregateExample:
    features: np.ndarray
    observation: object
    kind: AggregationKind

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2 or self.features.shape[0] != self.kind.k:
            raise ValueError(f"expected {self.kind.k} feature vectors, got shape {self.features.shape}")


@dataclass
class AggregateDataset:
    """``N`` sets of ``K`` feature vectors with one observation per set.

    ``features`` has shape ``(N, K, D)``. ``observations`` has shape
    ``(N,)`` except for ``rank_list`` where it is ``(N, K)`` holding the
    permutation. ``source_indices`` records which labeled rows formed each
    set, kept for debugging and dumps.
    """

    features: np.ndarray
    observations: np.ndarray
    kind: AggregationKind
    class_count: int | None = None
    seed: int | None = None
    source_indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.observations = np.asarray(self.observations)
        if self.features.ndim != 3 or self.features.shape[1] != self.kind.k:
            raise ValueError(f"features must have shape (N, {self.kind.k}, D), got {self.features.shape}")
        if len(self.observations) != len(self.features):
            raise ValueError("one observation per set is required")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, i) -> AggregateExample:
        return AggregateExample(self.features[i], self.observations[i], self.kind)

    def __iter__(self) -> Iterator[AggregateExample]:
        for i in range(len(self)):
            yield self[i]


def _check_class(z, n_classes):
    if z < 0 or (n_classes is not None and z >= n_classes):
        raise ValueError(f"class index {z} out of range")


def agg_similarity(z1: int, z2: int, n_classes: int | None = None) -> int:
    _check_class(z1, n_classes)
    _check_class(z2, n_classes)
    return int(z1 == z2)


def agg_triplet(z1: int, z2: int, z3: int, distance: np.ndarray) -> int:
    """1 iff the anchor ``z1`` is strictly closer to ``z2`` than to ``z3``."""
    c = len(distance)
    for z in (z1, z2, z3):
        _check_class(z, c)
    return int(distance[z1, z2] < distance[z1, z3])


def agg_multi_instance(zs: Sequence[int], positive_class: int = 1) -> int:
    if len(zs) == 0:
        raise ValueError("empty set")
    return int(any(z == positive_class for z in zs))


def agg_sum(zs: Sequence[float]) -> float:
    if len(zs) == 0:
        raise ValueError("empty set")
    return float(np.sum(zs))


def agg_mean(zs: Sequence[float]) -> float:
    if len(zs) == 0:
        raise ValueError("empty set")
    return float(np.mean(zs))


def agg_rank_pair(z1: float, z2: float) -> int:
    if z1 == z2:
        raise Resample("tied pair")
    return int(z1 > z2)


def agg_rank_list(zs: Sequence[float]) -> tuple[int, ...]:
    """Indices of ``zs`` in strictly decreasing order of value."""
    zs = np.asarray(zs, dtype=float)
    if len(np.unique(zs)) != len(zs):
        raise Resample("tied list")
    return tuple(int(i) for i in np.argsort(-zs, kind="stable"))


def apply_aggregate(kind: AggregationKind, zs):
    tag = kind.tag
    if tag == "similarity":
        return agg_similarity(int(zs[0]), int(zs[1]))
    if tag == "triplet":
        return agg_triplet(int(zs[0]), int(zs[1]), int(zs[2]), kind.distance)
    if tag == "multi_instance":
        return agg_multi_instance([int(z) for z in zs], kind.positive_class)
    if tag == "mean":
        return agg_mean(zs)
    if tag == "sum":
        return agg_sum(zs)
    if tag == "rank_pair":
        return agg_rank_pair(float(zs[0]), float(zs[1]))
    return agg_rank_list(zs)


def make_aggregate_dataset(X, z, kind: AggregationKind, n_sets: int | None = None, seed: int = 0) -> AggregateDataset:
    """Draw ``n_sets`` sets of ``kind.k`` rows uniformly with replacement.

    ``n_sets`` defaults to ``len(X)``, or ``10 * len(X)`` for rank pairs.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a nonempty 2-D array")
    if len(z) != len(X):
        raise ValueError("X and z lengths differ")
    n = len(X)
    if n_sets is None:
        n_sets = 10 * n if kind.tag == "rank_pair" else n
    rng = np.random.Generator(np.random.PCG64(seed))

    idx = np.empty((n_sets, kind.k), dtype=np.int64)
    obs = []
    for s in range(n_sets):
        for _ in range(MAX_RETRIES):
            draw = rng.integers(0, n, size=kind.k)
            try:
                y = apply_aggregate(kind, z[draw])
            except Resample:
                continue
            break
        else:
            raise RetryExhausted(f"{MAX_RETRIES} consecutive resamples for set {s}")
        idx[s] = draw
        obs.append(y)

    if kind.tag == "rank_list":
        observations = np.asarray(obs, dtype=np.int64).reshape(n_sets, kind.k)
    elif kind.tag in ("mean", "sum"):
        observations = np.asarray(obs, dtype=float)
    else:
        observations = np.asarray(obs, dtype=np.int64)
    class_count = kind.n_classes
    if class_count is None and kind.is_classification:
        class_count = int(z.max()) + 1
    return AggregateDataset(X[idx], observations, kind, class_count, seed, idx)


def _format_obs(kind, y) -> str:
    if kind.tag == "rank_list":
        return ",".join(str(int(v)) for v in y)
    if kind.tag in ("mean", "sum"):
        return repr(float(y))
    return str(int(y))


def write_dump(dataset: AggregateDataset, fp: IO[str]) -> None:
    """One set per line: ``indices<TAB>observation<TAB>tag``."""
    if dataset.source_indices is None:
        raise ValueError("dataset carries no source indices to dump")
    for ids, y in zip(dataset.source_indices, dataset.observations):
        fp.write(f"{','.join(str(int(i)) for i in ids)}\t{_format_obs(dataset.kind, y)}\t{dataset.kind.tag}\n")


def read_dump(fp: IO[str], X, kind: AggregationKind | None = None) -> AggregateDataset:
    """Rebuild a dataset from :func:`write_dump` output and the source rows ``X``."""
    X = np.asarray(X, dtype=float)
    rows, obs, tag = [], [], None
    for lineno, line in enumerate(fp, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        ids, y, t = parts
        if tag is None:
            tag = t
        elif t != tag:
            raise ValueError(f"line {lineno}: mixed aggregation tags")
        rows.append([int(i) for i in ids.split(",")])
        obs.append(y)
    if tag is None:
        raise ValueError("empty dump")
    idx = np.asarray(rows, dtype=np.int64)
    if kind is None:
        if tag == "triplet":
            raise ValueError("triplet dumps need an explicit kind carrying the distance matrix")
        kind = AggregationKind(tag, k=idx.shape[1])
    if kind.tag != tag:
        raise ValueError(f"dump holds {tag} sets, kind says {kind.tag}")
    if tag == "rank_list":
        observations = np.asarray([[int(v) for v in y.split(",")] for y in obs], dtype=np.int64)
    elif tag in ("mean", "sum"):
        observations = np.asarray([float(y) for y in obs])
    else:
        observations = np.asarray([int(y) for y in obs], dtype=np.int64)
    return AggregateDataset(X[idx], observations, kind, kind.n_classes, None, idx)
