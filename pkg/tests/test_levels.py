"""Level assignment distribution, union queries, and index persistence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from levelsum import kernels, levels, vecstore
from levelsum.kernels import KDE, for_dataset
from levelsum.levels import (
    LevelAssignment,
    assign_levels,
    build,
    first_k_mask,
    load_index,
    save_index,
    union_from_scores,
    union_size_bound,
    union_topk,
)
from levelsum.vecstore import Dataset, gaussian_clusters


class TestAssignLevels:
    def test_deterministic(self):
        a = assign_levels(1000, seed=5)
        b = assign_levels(1000, seed=5)
        assert np.array_equal(a.levels, b.levels)

    def test_accepts_dataset_or_count(self):
        ds = gaussian_clusters(50, 3, seed=1)
        assert np.array_equal(assign_levels(ds, 2).levels, assign_levels(50, 2).levels)

    def test_geometric_distribution(self):
        """Occupancy matches Pr(l) = 2**-l: chi-square over levels 1..14 + tail."""
        lv = assign_levels(1_000_000, seed=13).levels
        observed = [np.count_nonzero(lv == i) for i in range(1, 15)]
        observed.append(np.count_nonzero(lv >= 15))
        expected = [1_000_000 * 2.0**-i for i in range(1, 15)]
        expected.append(1_000_000 * 2.0**-14)
        res = stats.chisquare(observed, expected)
        assert res.pvalue > 0.001

    def test_levels_start_at_one(self):
        lv = assign_levels(100_000, seed=3).levels
        assert lv.min() == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            LevelAssignment(np.array([0, 1]))
        with pytest.raises(ValueError):
            LevelAssignment(np.array([1, 65]))
        with pytest.raises(ValueError):
            LevelAssignment(np.array([], dtype=np.int64))


class TestBuild:
    def test_partition(self):
        ds = gaussian_clusters(500, 4, seed=2)
        asg = assign_levels(ds, 7)
        index = build(ds, asg, k=10)
        sizes = [o.size for o in index.oracles.values()]
        assert sum(sizes) == ds.n
        all_ids = np.concatenate([o.ids for o in index.oracles.values()])
        assert sorted(all_ids.tolist()) == list(range(ds.n))

    def test_forced_single_level(self):
        ds = gaussian_clusters(64, 4, seed=2)
        asg = LevelAssignment(np.ones(64, dtype=np.int64))
        index = build(ds, asg, k=4)
        assert list(index.oracles) == [1]
        assert index.oracles[1].size == 64

    def test_single_point_dataset(self):
        ds = Dataset(np.ones((1, 3)))
        index = build(ds, assign_levels(ds, 0), k=2)
        assert len(index.oracles) == 1

    def test_mismatched_assignment_rejected(self):
        ds = gaussian_clusters(10, 2, seed=0)
        with pytest.raises(ValueError):
            build(ds, assign_levels(11, 0), k=2)


class TestUnionTopk:
    def test_size_is_sum_of_min_counts(self):
        ds = gaussian_clusters(800, 5, seed=4)
        asg = assign_levels(ds, 9)
        k = 12
        index = build(ds, asg, k=k)
        fn = for_dataset(KDE, 0.8, ds)
        u = union_topk(index, fn, ds.vectors[3])
        counts = np.bincount(asg.levels)
        expected = int(sum(min(int(c), k) for c in counts[1:] if c > 0))
        assert u.size == expected
        assert sum(u.per_level_counts.values()) == expected

    def test_two_levels_five_and_three(self):
        ds = gaussian_clusters(8, 3, seed=1)
        asg = LevelAssignment(np.array([1, 1, 1, 1, 1, 2, 2, 2]))
        index = build(ds, asg, k=2)
        u = union_topk(index, for_dataset(KDE, 1.0, ds), ds.vectors[0])
        assert u.size == 4

    def test_single_level_k_ge_n_returns_everything_sorted(self):
        ds = gaussian_clusters(30, 3, seed=5)
        asg = LevelAssignment(np.ones(30, dtype=np.int64))
        index = build(ds, asg, k=50)
        u = union_topk(index, for_dataset(KDE, 1.0, ds), ds.vectors[2])
        assert u.size == 30
        keys = [h.key for h in u.hits]
        assert keys == sorted(keys, reverse=True)

    def test_no_duplicate_ids(self):
        ds = gaussian_clusters(300, 4, seed=6)
        index = build(ds, assign_levels(ds, 1), k=7)
        u = union_topk(index, for_dataset(KDE, 0.6, ds), ds.vectors[0])
        ids = [h.id for h in u.hits]
        assert len(ids) == len(set(ids))

    def test_threaded_merge_is_identical(self):
        ds = gaussian_clusters(400, 4, seed=6)
        index = build(ds, assign_levels(ds, 2), k=9)
        fn = for_dataset(KDE, 0.7, ds)
        q = ds.vectors[14]
        assert union_topk(index, fn, q, threads=1).hits == union_topk(index, fn, q, threads=4).hits

    def test_threads_env_override(self, monkeypatch):
        monkeypatch.setenv(levels.THREADS_ENV, "3")
        assert levels._thread_count(None) == 3
        assert levels._thread_count(2) == 2

    def test_k_override(self):
        ds = gaussian_clusters(200, 4, seed=8)
        index = build(ds, assign_levels(ds, 3), k=5)
        fn = for_dataset(KDE, 0.7, ds)
        u5 = union_topk(index, fn, ds.vectors[0])
        u9 = union_topk(index, fn, ds.vectors[0], k=9)
        assert u9.size >= u5.size

    def test_dimension_mismatch(self):
        ds = gaussian_clusters(50, 4, seed=8)
        index = build(ds, assign_levels(ds, 3), k=5)
        fn = kernels.ScoreFn(task=KDE, param=1.0, dim=3, dataset_size=50)
        with pytest.raises(ValueError, match="dimension mismatch"):
            union_topk(index, fn, np.zeros(3))


def test_mean_union_size_within_bound_small():
    n, k, reps = 20_000, 16, 60
    sizes = []
    for r in range(reps):
        counts = assign_levels(n, vecstore.rng_stream(21, vecstore.STREAM_LEVELS, r)).counts()
        sizes.append(sum(min(int(c), k) for c in counts[1:]))
    sizes = np.array(sizes, dtype=float)
    bound = union_size_bound(n, k)
    stderr = sizes.std(ddof=1) / np.sqrt(reps)
    assert sizes.mean() <= bound + 3 * stderr


class TestFirstKMask:
    def naive(self, seq, k):
        seen: dict[int, int] = {}
        out = []
        for lv in seq:
            seen[lv] = seen.get(lv, 0) + 1
            out.append(seen[lv] <= k)
        return np.array(out)

    @given(
        st.lists(st.integers(1, 6), min_size=1, max_size=60),
        st.integers(1, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_matches_naive_counting(self, seq, k):
        arr = np.array(seq, dtype=np.int64)
        assert np.array_equal(first_k_mask(arr, k), self.naive(seq, k))


class TestUnionFromScores:
    def test_matches_exact_pipeline_when_keys_follow_scores(self):
        # kde keys are injective in score, so the analytic union and the
        # retrieval union agree exactly
        ds = gaussian_clusters(100, 4, seed=11)
        asg = assign_levels(ds, 17)
        k = 3
        fn = for_dataset(KDE, 0.9, ds)
        q = ds.vectors[8]
        f = kernels.scores(fn, ds.vectors, q)
        analytic = union_from_scores(f, asg, k)
        retrieved = union_topk(build(ds, asg, k=k), fn, q)
        assert [h.id for h in analytic.hits] == [h.id for h in retrieved.hits]
        assert analytic.per_level_counts == retrieved.per_level_counts

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            union_from_scores(np.ones(3), LevelAssignment(np.ones(4, dtype=np.int64)), 1)


class TestPersistence:
    def test_exact_round_trip(self, tmp_path):
        ds = gaussian_clusters(300, 5, seed=12)
        index = build(ds, assign_levels(ds, 23), k=8)
        path = tmp_path / "index.npz"
        save_index(index, path)
        loaded = load_index(path, ds)
        fn = for_dataset(KDE, 0.8, ds)
        q = ds.vectors[7]
        assert union_topk(loaded, fn, q).hits == union_topk(index, fn, q).hits
        assert loaded.k == index.k and loaded.oracle_kind == index.oracle_kind

    def test_ivf_round_trip(self, tmp_path):
        ds = gaussian_clusters(600, 5, seed=12)
        index = build(ds, assign_levels(ds, 23), k=8, oracle_kind="ivf", seed=3, nlist=4)
        path = tmp_path / "index.npz"
        save_index(index, path)
        loaded = load_index(path, ds)
        fn = for_dataset(KDE, 0.8, ds)
        q = ds.vectors[7]
        assert union_topk(loaded, fn, q).hits == union_topk(index, fn, q).hits

    def test_rejects_wrong_dataset(self, tmp_path):
        ds = gaussian_clusters(100, 5, seed=1)
        other = gaussian_clusters(101, 5, seed=1)
        index = build(ds, assign_levels(ds, 2), k=4)
        path = tmp_path / "index.npz"
        save_index(index, path)
        with pytest.raises(ValueError, match="built for"):
            load_index(path, other)
