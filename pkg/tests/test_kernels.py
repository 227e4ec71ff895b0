"""Score formulas, the exact-sum oracle, and similarity-key monotonicity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelsum import vecstore
from levelsum.kernels import (
    COUNT,
    KDE,
    SOFTMAX,
    ScoreFn,
    ScoreOverflowError,
    exact_sum,
    for_dataset,
    score,
    scores,
    similarity_key,
    similarity_keys,
)
from levelsum.vecstore import Dataset, binary_planted


def test_kde_at_query_point():
    fn = ScoreFn(task=KDE, param=1.0, dim=2, dataset_size=1)
    x = np.array([0.3, -0.7])
    assert score(fn, x, x) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)


def test_softmax_zero_dot_is_one():
    fn = ScoreFn(task=SOFTMAX, param=3.7, dim=2, dataset_size=5)
    assert score(fn, np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 1.0


def test_count_ball_boundary_is_inclusive():
    # (3, 4) sits at distance exactly 5 from the origin
    fn = ScoreFn(task=COUNT, param=5.0, dim=2, dataset_size=1)
    assert score(fn, np.array([3.0, 4.0]), np.zeros(2)) == 1.0
    just_inside = ScoreFn(task=COUNT, param=4.999, dim=2, dataset_size=1)
    assert score(just_inside, np.array([3.0, 4.0]), np.zeros(2)) == 0.0


def test_exact_sum_softmax_hand_case():
    # dots {0, ln2*T, ln3*T} exponentiate to {1, 2, 3}
    T = 2.0
    X = np.array([[0.0], [math.log(2.0) * T], [math.log(3.0) * T]])
    ds = Dataset(X)
    fn = for_dataset(SOFTMAX, T, ds)
    assert exact_sum(fn, ds, np.array([1.0])) == pytest.approx(6.0, rel=1e-12)


def test_exact_sum_counts_planted_ball():
    planted = binary_planted(1000, 5, m=100, seed=7)
    fn = for_dataset(COUNT, planted.radius, planted.dataset)
    assert exact_sum(fn, planted.dataset, planted.query) == 100.0


def test_exact_sum_kde_single_point_dataset():
    q = np.array([0.1, 0.2])
    ds = Dataset(q.reshape(1, 2))
    fn = for_dataset(KDE, 1.0, ds)
    assert exact_sum(fn, ds, q) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)


def test_exact_sum_is_permutation_invariant():
    ds = vecstore.gaussian_clusters(300, 6, seed=2)
    perm = vecstore.rng_stream(0, vecstore.STREAM_SAMPLE).permutation(ds.n)
    shuffled = Dataset(ds.vectors[perm])
    q = ds.vectors[3]
    for task, param in ((KDE, 0.7), (SOFTMAX, 1.5), (COUNT, 2.0)):
        fn = for_dataset(task, param, ds)
        assert exact_sum(fn, ds, q) == exact_sum(fn, shuffled, q)


def test_kde_matches_independent_unnormalized_sum():
    ds = vecstore.gaussian_clusters(200, 4, seed=5)
    q = ds.vectors[0]
    sigma = 0.6
    fn = for_dataset(KDE, sigma, ds)
    d2 = ((ds.vectors - q) ** 2).sum(axis=1)
    unnormalized = math.fsum(
        (2.0 * math.pi * sigma**2) ** (-ds.dim / 2) * np.exp(-d2 / (2.0 * sigma**2))
    )
    assert exact_sum(fn, ds, q) * ds.n == pytest.approx(unnormalized, rel=1e-12)


def test_peaky_kde_underflows_to_zero_without_error():
    fn = ScoreFn(task=KDE, param=0.01, dim=4, dataset_size=10)
    far = np.full(4, 50.0)
    assert score(fn, far, np.zeros(4)) == 0.0


def test_softmax_overflow_is_an_error():
    fn = ScoreFn(task=SOFTMAX, param=1.0, dim=1, dataset_size=10)
    with pytest.raises(ScoreOverflowError):
        score(fn, np.array([1000.0]), np.array([1.0]))


def test_kde_overflow_is_an_error():
    # normalization (2*pi*sigma^2)^(-d/2) alone overflows for tiny sigma
    fn = ScoreFn(task=KDE, param=1e-4, dim=200, dataset_size=10)
    with pytest.raises(ScoreOverflowError):
        score(fn, np.zeros(200), np.zeros(200))


def test_scorefn_validation():
    with pytest.raises(ValueError):
        ScoreFn(task="nope", param=1.0, dim=2, dataset_size=1)
    with pytest.raises(ValueError):
        ScoreFn(task=KDE, param=0.0, dim=2, dataset_size=1)
    with pytest.raises(ValueError):
        ScoreFn(task=COUNT, param=-1.0, dim=2, dataset_size=1)
    # zero radius is legal: counts exact matches only
    ScoreFn(task=COUNT, param=0.0, dim=2, dataset_size=1)


def test_dimension_mismatch_raises():
    fn = ScoreFn(task=KDE, param=1.0, dim=3, dataset_size=1)
    with pytest.raises(ValueError, match="dimension mismatch"):
        score(fn, np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError, match="dimension mismatch"):
        score(fn, np.zeros(3), np.zeros(2))


def test_similarity_direction_per_task():
    q = np.zeros(2)
    near, far = np.array([1.0, 0.0]), np.array([2.0, 0.0])
    for task, param in ((KDE, 1.0), (COUNT, 1.5)):
        fn = ScoreFn(task=task, param=param, dim=2, dataset_size=1)
        assert similarity_key(fn, near, q) > similarity_key(fn, far, q)
    fn = ScoreFn(task=SOFTMAX, param=1.0, dim=2, dataset_size=1)
    qd = np.array([1.0, 0.0])
    assert similarity_key(fn, np.array([0.9, 0.0]), qd) > similarity_key(
        fn, np.array([0.1, 0.0]), qd
    )


def test_count_key_separates_inside_from_outside():
    planted = binary_planted(400, 4, m=40, seed=3)
    ds, q, r = planted.dataset, planted.query, planted.radius
    fn = for_dataset(COUNT, r, ds)
    keys = similarity_keys(fn, ds.vectors, q)
    f = scores(fn, ds.vectors, q)
    worst_inside = keys[f == 1.0].min()
    best_outside = keys[f == 0.0].max()
    assert worst_inside > best_outside


@given(st.integers(0, 10_000), st.sampled_from([KDE, SOFTMAX, COUNT]))
@settings(max_examples=60, deadline=None)
def test_key_order_refines_score_order(seed, task):
    """Whenever two scores differ, their keys differ the same way."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, size=(8, 4))
    q = rng.uniform(-3, 3, size=4)
    param = float(rng.uniform(0.5, 2.5))
    fn = ScoreFn(task=task, param=param, dim=4, dataset_size=8)
    f = scores(fn, X, q)
    keys = similarity_keys(fn, X, q)
    for i in range(len(f)):
        for j in range(len(f)):
            if f[i] != f[j]:
                assert np.sign(keys[i] - keys[j]) == np.sign(f[i] - f[j])
