import io
import itertools

import numpy as np
import pytest

from aggmle.aggregate import (
    AggregationKind,
    Resample,
    RetryExhausted,
    agg_mean,
    agg_multi_instance,
    agg_rank_list,
    agg_rank_pair,
    agg_similarity,
    agg_sum,
    agg_triplet,
    indicator_distance,
    make_aggregate_dataset,
    read_dump,
    write_dump,
)


def test_similarity():
    assert agg_similarity(2, 2) == 1
    assert agg_similarity(2, 4) == 0
    for a, b in itertools.product(range(4), repeat=2):
        assert agg_similarity(a, b) == agg_similarity(b, a)
    with pytest.raises(ValueError):
        agg_similarity(0, 5, n_classes=4)


def test_triplet_examples():
    d = indicator_distance(3)
    assert agg_triplet(0, 0, 1, d) == 1
    assert agg_triplet(0, 1, 2, d) == 0
    assert agg_triplet(0, 1, 0, d) == 0
    with pytest.raises(ValueError):
        agg_triplet(0, 1, 3, d)


@pytest.mark.parametrize("c", [2, 3, 4, 5])
def test_triplet_indicator_closed_form(c):
    d = indicator_distance(c)
    for z1, z2, z3 in itertools.product(range(c), repeat=3):
        assert agg_triplet(z1, z2, z3, d) == int(z1 == z2 and z1 != z3)


def test_multi_instance():
    assert agg_multi_instance([0, 0, 0], 1) == 0
    assert agg_multi_instance([0, 1, 0], 1) == 1
    for perm in itertools.permutations([0, 1, 0, 0]):
        assert agg_multi_instance(perm, 1) == 1
    with pytest.raises(ValueError):
        agg_multi_instance([], 1)


def test_mean_and_sum():
    assert agg_mean([1, 2, 3, 6]) == 3.0
    assert agg_mean([1.5] * 5) == 1.5
    rng = np.random.default_rng(0)
    for _ in range(10):
        zs = rng.normal(size=rng.integers(1, 8))
        assert agg_mean(zs) == pytest.approx(agg_sum(zs) / len(zs))
    with pytest.raises(ValueError):
        agg_mean([])


def test_rank_pair():
    assert agg_rank_pair(2.0, 1.0) == 1
    assert agg_rank_pair(1.0, 2.0) == 0
    with pytest.raises(Resample):
        agg_rank_pair(1.0, 1.0)


def test_rank_list():
    assert agg_rank_list([3.0, 1.0, 2.0]) == (0, 2, 1)
    assert agg_rank_list([5.0, 4.0, 3.0, 1.0]) == (0, 1, 2, 3)
    assert agg_rank_list([1.0, 2.0, 3.0]) == (2, 1, 0)
    with pytest.raises(Resample):
        agg_rank_list([1.0, 2.0, 1.0])


def test_kind_validation():
    with pytest.raises(ValueError):
        AggregationKind("similarity", k=3)
    with pytest.raises(ValueError):
        AggregationKind("triplet")
    with pytest.raises(ValueError):
        AggregationKind("mean", distance=indicator_distance(2))
    with pytest.raises(ValueError):
        AggregationKind("triplet", distance=np.ones((3, 3)))
    assert AggregationKind("mean").k == 4
    assert AggregationKind("rank_pair").k == 2


def test_single_point_similarity():
    ds = make_aggregate_dataset([[0.5, 1.0]], [2], AggregationKind("similarity"), n_sets=5)
    assert ds.observations.tolist() == [1] * 5


def test_two_class_similarity_rate():
    # P(Y=1) = 1/2 for two equally likely classes; 3 sigma binomial band
    n = 20000
    ds = make_aggregate_dataset([[0.0], [1.0]], [0, 1], AggregationKind("similarity"), n_sets=n, seed=3)
    assert abs(ds.observations.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_generation_is_reproducible():
    rng = np.random.default_rng(1)
    X, z = rng.normal(size=(50, 3)), rng.normal(size=50)
    a = make_aggregate_dataset(X, z, AggregationKind("mean"), seed=11)
    b = make_aggregate_dataset(X, z, AggregationKind("mean"), seed=11)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.observations.tobytes() == b.observations.tobytes()
    c = make_aggregate_dataset(X, z, AggregationKind("mean"), seed=12)
    assert c.observations.tobytes() != a.observations.tobytes()


@pytest.mark.parametrize(
    "kind",
    [
        AggregationKind("similarity"),
        AggregationKind.triplet(4),
        AggregationKind("multi_instance", k=3),
        AggregationKind("mean", k=3),
        AggregationKind("sum", k=2),
        AggregationKind("rank_pair"),
        AggregationKind("rank_list", k=3),
    ],
    ids=lambda k: k.tag,
)
def test_observation_is_aggregate_of_sources(kind):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    z = rng.integers(0, 4, size=40) if kind.is_classification else rng.normal(size=40)
    ds = make_aggregate_dataset(X, z, kind, n_sets=200, seed=5)
    from aggmle.aggregate import apply_aggregate

    for ids, y, feats in zip(ds.source_indices, ds.observations, ds.features):
        assert np.array_equal(feats, X[ids])
        assert np.array_equal(np.asarray(apply_aggregate(kind, z[ids])), np.asarray(y))


def test_default_set_counts():
    X, z = np.zeros((30, 1)), np.arange(30.0)
    assert len(make_aggregate_dataset(X, z, AggregationKind("mean"))) == 30
    assert len(make_aggregate_dataset(X, z, AggregationKind("rank_pair"))) == 300


def test_constant_targets_exhaust_retries():
    with pytest.raises(RetryExhausted):
        make_aggregate_dataset(np.zeros((3, 1)), np.ones(3), AggregationKind("rank_pair"), n_sets=2)


@pytest.mark.parametrize("tag", ["mean", "rank_list", "similarity"])
def test_dump_round_trip(tag):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(25, 3))
    z = rng.integers(0, 3, size=25) if tag == "similarity" else rng.normal(size=25)
    kind = AggregationKind(tag) if tag == "similarity" else AggregationKind(tag, k=3)
    ds = make_aggregate_dataset(X, z, kind, n_sets=40, seed=9)
    buf = io.StringIO()
    write_dump(ds, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 40 and all(line.endswith("\t" + tag) for line in lines)
    back = read_dump(io.StringIO(buf.getvalue()), X)
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.observations, ds.observations)
    assert back.observations.dtype == ds.observations.dtype
