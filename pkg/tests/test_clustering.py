import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arousal_cpd.clustering import (
    SHAPE_POINTS,
    ClusterConfig,
    cluster_partition,
    extract_features,
    kmeans,
    merge_labels,
    prune_breakpoints,
)
from arousal_cpd.errors import InvalidKError
from arousal_cpd.ggs import BreakpointSet, GgsConfig, ggs
from arousal_cpd.timeseries import UniformSeries


def series(x, rate=1.0):
    return UniformSeries.from_array(np.asarray(x, dtype=float), rate)


def best_partition_by_enumeration(values, k):
    """Globally optimal 1-D k-means assignment by trying every labeling."""
    values = np.asarray(values, dtype=float)
    best = (np.inf, None)
    for labels in itertools.product(range(k), repeat=len(values)):
        labels = np.array(labels)
        if len(set(labels)) != k:
            continue
        cost = sum(((values[labels == j] - values[labels == j].mean()) ** 2).sum() for j in range(k))
        if cost < best[0] - 1e-12:
            best = (cost, labels)
    return best[1]


def groups(labels):
    return {frozenset(np.flatnonzero(np.asarray(labels) == lab)) for lab in set(labels)}


class TestFeatures:
    def test_constant_single_segment(self):
        f = extract_features(series(np.full(10, 4.2)), BreakpointSet((), 10))
        np.testing.assert_allclose(f, [[4.2]])

    def test_two_segments(self):
        f = extract_features(series([0, 0, 0, 9, 9, 9]), BreakpointSet((3,), 6))
        np.testing.assert_array_equal(f, [[0.0], [9.0]])

    def test_matches_naive_means(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(100, 3))
        bps = BreakpointSet((13, 40, 77), 100)
        f = extract_features(series(x), bps)
        edges = [0, 13, 40, 77, 100]
        for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            for c in range(3):
                assert f[i, c] == pytest.approx(sum(x[a:b, c]) / (b - a), abs=1e-12)

    def test_shape_mode_dimensions(self):
        x = np.random.default_rng(1).normal(size=(50, 2))
        f = extract_features(series(x), BreakpointSet((10, 33), 50), "mean-plus-shape")
        assert f.shape == (3, 2 + 2 * SHAPE_POINTS)
        # first and last shape points are the segment end samples
        assert f[1, 2] == x[10, 0] and f[1, 2 + SHAPE_POINTS - 1] == x[32, 0]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            extract_features(series(np.zeros(10)), BreakpointSet((), 11))


class TestKmeans:
    def test_k_one(self):
        np.testing.assert_array_equal(kmeans(np.arange(5.0), ClusterConfig(k=1)), 0)

    def test_k_equals_n_distinct(self):
        labels = kmeans(np.array([3.0, -1.0, 7.0, 2.0]), ClusterConfig(k=4))
        assert sorted(labels) == [0, 1, 2, 3]
        # canonical numbering follows centroid order
        np.testing.assert_array_equal(labels, [2, 0, 3, 1])

    def test_known_three_groups(self):
        values = [0, 0.1, 5, 5.1, 10, 10.2]
        labels = kmeans(np.array(values), ClusterConfig(k=3))
        np.testing.assert_array_equal(labels, [0, 0, 1, 1, 2, 2])
        assert groups(labels) == groups(best_partition_by_enumeration(values, 3))

    def test_random_1d_matches_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            centers = rng.choice([0.0, 10.0, 20.0, 30.0], size=3, replace=False)
            values = np.concatenate([c + rng.normal(0, 0.5, 2) for c in centers])
            assert groups(kmeans(values, ClusterConfig(k=3))) == groups(
                best_partition_by_enumeration(values, 3)
            )

    def test_k_too_large(self):
        with pytest.raises(InvalidKError):
            kmeans(np.arange(3.0), ClusterConfig(k=4))

    def test_invalid_k(self):
        with pytest.raises(InvalidKError):
            ClusterConfig(k=0)

    def test_deterministic(self):
        f = np.random.default_rng(3).normal(size=(40, 2))
        a = kmeans(f, ClusterConfig(k=4, seed=5))
        b = kmeans(f, ClusterConfig(k=4, seed=5))
        np.testing.assert_array_equal(a, b)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        f = np.concatenate([rng.normal(c, 0.3, (5, 2)) for c in (0.0, 4.0, 8.0)])
        perm = rng.permutation(len(f))
        base = kmeans(f, ClusterConfig(k=3))
        np.testing.assert_array_equal(kmeans(f[perm], ClusterConfig(k=3)), base[perm])


class TestPrune:
    def test_all_equal(self):
        assert prune_breakpoints(BreakpointSet((3, 6), 9), [1, 1, 1]).breakpoints == ()

    def test_all_distinct(self):
        assert prune_breakpoints(BreakpointSet((3, 6), 9), [0, 1, 2]).breakpoints == (3, 6)

    def test_only_changing_boundary_survives(self):
        assert prune_breakpoints(BreakpointSet((3, 6), 9), [0, 0, 1]).breakpoints == (6,)

    def test_label_count_checked(self):
        with pytest.raises(ValueError):
            prune_breakpoints(BreakpointSet((3,), 9), [0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=15))
    def test_properties(self, labels):
        bps = BreakpointSet(tuple(range(2, 2 * len(labels), 2)), 2 * len(labels))
        pruned = prune_breakpoints(bps, labels)
        merged = merge_labels(bps, labels)
        assert len(pruned) <= len(bps)
        assert len(merged) == len(pruned) + 1
        assert all(a != b for a, b in zip(merged[:-1], merged[1:]))
        assert prune_breakpoints(pruned, merged) == pruned


class TestClusterPartition:
    def test_constant_series(self):
        p = cluster_partition(series(np.full(30, 2.0)), BreakpointSet((10, 20), 30), ClusterConfig(k=2))
        assert p.intervals == ((0, 30),)
        assert p.labels == (0,)

    def test_three_level_series(self):
        rng = np.random.default_rng(0)
        x = np.r_[rng.normal(0, 0.1, 60), rng.normal(5, 0.1, 60), rng.normal(0, 0.1, 60)]
        s = series(x, 0.5)
        bps = ggs(s, GgsConfig(lam=1.0, max_breakpoints=10))
        p = cluster_partition(s, bps, ClusterConfig(k=2))
        assert p.intervals == ((0, 60), (60, 120), (120, 180))
        assert p.labels == (0, 1, 0)

    def test_distinct_segments_unchanged(self):
        x = np.r_[np.zeros(5), np.full(5, 3.0), np.full(5, 6.0), np.full(5, 9.0)]
        bps = BreakpointSet((5, 10, 15), 20)
        p = cluster_partition(series(x), bps, ClusterConfig(k=4))
        assert p.breakpoints == bps.breakpoints
        assert p.labels == (0, 1, 2, 3)

    def test_merges_same_cluster_neighbours(self):
        x = np.r_[np.zeros(5), np.full(5, 0.1), np.full(5, 9.0), np.full(5, 9.1)]
        p = cluster_partition(series(x), BreakpointSet((5, 10, 15), 20), ClusterConfig(k=2))
        assert p.intervals == ((0, 10), (10, 20))
        assert p.labels == (0, 1)
