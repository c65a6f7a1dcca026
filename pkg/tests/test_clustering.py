import itertools
import math

import numpy as np
import pytest
import scipy.linalg

from autokg.clustering import kmeans, sample_cluster, spectral
from autokg.errors import ParameterError
from autokg.simgraph import SimilarityGraph, build_similarity_graph
from conftest import random_unit_vectors


def kmeans_objective(vectors, result):
    return float(np.sum((vectors - result.centers[result.assignments]) ** 2))


def two_blobs():
    near = np.array([[0.0, 0.0], [0.3, 0.1], [-0.2, 0.2]])
    far = np.array([[10.0, 10.0], [10.2, 9.9], [9.8, 10.1]])
    return np.vstack([near, far])


def brute_force_best_2_partition(vectors):
    """Enumerate every 2-partition and minimize the k-means objective."""
    n = len(vectors)
    best, best_cost = None, np.inf
    for bits in itertools.product([0, 1], repeat=n):
        if len(set(bits)) < 2:
            continue
        cost = 0.0
        for cid in (0, 1):
            members = vectors[[i for i in range(n) if bits[i] == cid]]
            cost += float(np.sum((members - members.mean(axis=0)) ** 2))
        if cost < best_cost:
            best_cost = cost
            best = bits
    groups = frozenset(
        frozenset(i for i in range(n) if best[i] == cid) for cid in (0, 1))
    return groups


class TestKmeans:
    def test_single_cluster_center_is_mean(self, rng):
        vectors = rng.normal(size=(12, 3))
        result = kmeans(vectors, 1, seed=0)
        assert set(result.assignments.tolist()) == {0}
        assert np.allclose(result.centers[0], vectors.mean(axis=0))

    def test_two_blobs_optimal_split(self):
        vectors = two_blobs()
        result = kmeans(vectors, 2, seed=3)
        got = frozenset(
            frozenset(np.where(result.assignments == cid)[0].tolist()) for cid in (0, 1))
        assert got == brute_force_best_2_partition(vectors)

    def test_each_point_own_cluster(self, rng):
        vectors = rng.normal(size=(6, 2)) * 5
        result = kmeans(vectors, 6, seed=1)
        assert sorted(result.assignments.tolist()) == list(range(6))

    def test_objective_nonincreasing(self, rng):
        vectors = np.vstack([rng.normal(size=(20, 3)) + offset
                             for offset in ([0, 0, 0], [6, 6, 6], [-6, 6, 0])])
        costs = [kmeans_objective(vectors, kmeans(vectors, 3, I_max=i, seed=5))
                 for i in range(1, 8)]
        for earlier, later in zip(costs, costs[1:]):
            assert later <= earlier + 1e-9

    def test_deterministic_given_seed(self, rng):
        vectors = rng.normal(size=(30, 4))
        a = kmeans(vectors, 4, seed=9)
        b = kmeans(vectors, 4, seed=9)
        assert np.array_equal(a.assignments, b.assignments)
        assert np.array_equal(a.centers, b.centers)

    def test_no_empty_clusters_on_duplicates(self):
        vectors = np.zeros((5, 2))
        result = kmeans(vectors, 3, seed=0)
        assert set(result.assignments.tolist()) == {0, 1, 2}

    def test_n_out_of_range(self, rng):
        vectors = rng.normal(size=(4, 2))
        with pytest.raises(ParameterError):
            kmeans(vectors, 5)
        with pytest.raises(ParameterError):
            kmeans(vectors, 0)


def weighted_cliques_graph():
    """Two tight 4-cliques joined by a single weak edge."""
    n = 8
    W = np.zeros((n, n))
    for group in (range(4), range(4, 8)):
        for i in group:
            for j in group:
                if i != j:
                    W[i, j] = 1.0
    W[3, 4] = W[4, 3] = 0.05
    return SimilarityGraph.from_weights(W)


def brute_force_min_ncut(W):
    n = W.shape[0]
    degree = W.sum(axis=1)
    best, best_cost = None, np.inf
    for bits in itertools.product([0, 1], repeat=n):
        if len(set(bits)) < 2:
            continue
        a = [i for i in range(n) if bits[i] == 0]
        b = [i for i in range(n) if bits[i] == 1]
        cut = W[np.ix_(a, b)].sum()
        cost = cut / degree[a].sum() + cut / degree[b].sum()
        if cost < best_cost:
            best_cost = cost
            best = frozenset(frozenset(g) for g in (a, b))
    return best


class TestSpectral:
    def test_two_cliques_min_cut(self):
        graph = weighted_cliques_graph()
        result = spectral(graph, 2, seed=0)
        got = frozenset(
            frozenset(np.where(result.assignments == cid)[0].tolist()) for cid in (0, 1))
        assert got == brute_force_min_ncut(graph.weights.toarray())

    def test_single_cluster(self, rng):
        graph = build_similarity_graph(random_unit_vectors(rng, 10, 4), K=4)
        result = spectral(graph, 1, seed=0)
        assert set(result.assignments.tolist()) == {0}

    def test_uniform_complete_graph_nonempty_split(self):
        W = np.ones((6, 6)) - np.eye(6)
        result = spectral(SimilarityGraph.from_weights(W), 2, seed=0)
        counts = np.bincount(result.assignments, minlength=2)
        assert counts.min() >= 1

    def test_smallest_eigenvalue_near_zero(self, rng):
        graph = build_similarity_graph(random_unit_vectors(rng, 30, 5), K=6)
        W = graph.weights.toarray()
        d = W.sum(axis=1)
        L_sym = np.eye(30) - (W / np.sqrt(np.outer(d, d)))
        smallest = scipy.linalg.eigvalsh(L_sym)[0]
        assert abs(smallest) <= 1e-6

    def test_deterministic(self, rng):
        graph = build_similarity_graph(random_unit_vectors(rng, 25, 4), K=5)
        a = spectral(graph, 3, seed=2)
        b = spectral(graph, 3, seed=2)
        assert np.array_equal(a.assignments, b.assignments)

    def test_cluster_count_validated(self, rng):
        graph = build_similarity_graph(random_unit_vectors(rng, 8, 3), K=3)
        with pytest.raises(ParameterError):
            spectral(graph, 9)


def ring_vectors(n, d=4):
    out = np.zeros((n, d))
    for i in range(n):
        out[i, 0] = math.cos(0.05 * i)
        out[i, 1] = math.sin(0.05 * i)
    return out


class TestSampleCluster:
    def test_small_cluster_returned_whole(self):
        members = np.arange(4)
        vectors = ring_vectors(4)
        sample = sample_cluster(members, vectors, vectors[0], c=15, seed=0)
        assert sorted(sample.all_blocks()) == [0, 1, 2, 3]
        assert len(set(sample.all_blocks())) == 4

    def test_large_cluster_cardinality(self):
        members = np.arange(100)
        vectors = ring_vectors(100)
        sample = sample_cluster(members, vectors, vectors[0], c=15, seed=1)
        assert len(sample.center_blocks) == 15
        assert len(sample.random_blocks) == 15
        assert len(set(sample.all_blocks())) == 30

    def test_halves_disjoint(self):
        members = np.arange(40)
        vectors = ring_vectors(40)
        sample = sample_cluster(members, vectors, vectors[3], c=10, seed=5)
        assert not set(sample.center_blocks) & set(sample.random_blocks)

    def test_center_half_is_nearest_by_angle(self):
        members = np.arange(20)
        vectors = ring_vectors(20)
        sample = sample_cluster(members, vectors, vectors[0], c=5, seed=0)
        assert sample.center_blocks == [0, 1, 2, 3, 4]

    def test_seed_determinism(self):
        members = np.arange(50)
        vectors = ring_vectors(50)
        a = sample_cluster(members, vectors, vectors[10], c=8, seed=42)
        b = sample_cluster(members, vectors, vectors[10], c=8, seed=42)
        assert a.all_blocks() == b.all_blocks()

    def test_empty_cluster_rejected(self):
        with pytest.raises(ParameterError):
            sample_cluster(np.array([], dtype=int), np.zeros((0, 3)), np.ones(3), c=2)

    def test_c_below_one(self):
        with pytest.raises(ParameterError):
            sample_cluster(np.arange(3), ring_vectors(3), ring_vectors(3)[0], c=0)
