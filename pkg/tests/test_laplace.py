import numpy as np
import pytest

from autokg.errors import ParameterError, SolverError
from autokg.laplace import LabelAssignment, laplace_learn
from autokg.simgraph import SimilarityGraph, build_similarity_graph
from conftest import random_unit_vectors


def path_graph(weights):
    n = len(weights) + 1
    W = np.zeros((n, n))
    for i, w in enumerate(weights):
        W[i, i + 1] = W[i + 1, i] = w
    return SimilarityGraph.from_weights(W)


def dense_harmonic_oracle(graph, labels):
    """Direct dense solve of the harmonic system, independent of the CG path."""
    n = graph.n_nodes
    W = graph.weights.toarray()
    L = np.diag(W.sum(axis=1)) - W
    labeled = np.array(sorted(labels.labels))
    values = np.array([labels.labels[i] for i in labeled])
    mask = np.ones(n, bool)
    mask[labeled] = False
    unlabeled = np.where(mask)[0]
    u = np.zeros(n)
    u[labeled] = values
    if unlabeled.size:
        u[unlabeled] = np.linalg.solve(
            L[np.ix_(unlabeled, unlabeled)], W[np.ix_(unlabeled, labeled)] @ values)
    return u


class TestAnalyticCases:
    def test_uniform_path_midpoint(self):
        sol = laplace_learn(path_graph([1.0, 1.0]), LabelAssignment({0: 1.0, 2: 0.0}))
        assert abs(sol.u[1] - 0.5) <= 1e-10

    def test_weighted_path_midpoint(self):
        # One unknown: u(b) = (2*1 + 1*0) / 3
        sol = laplace_learn(path_graph([2.0, 1.0]), LabelAssignment({0: 1.0, 2: 0.0}))
        assert abs(sol.u[1] - 2.0 / 3.0) <= 1e-10
        oracle = dense_harmonic_oracle(path_graph([2.0, 1.0]), LabelAssignment({0: 1.0, 2: 0.0}))
        assert np.allclose(sol.u, oracle, atol=1e-10)

    def test_constant_labels_propagate(self):
        graph = path_graph([1.0, 2.0, 0.5, 1.5])
        sol = laplace_learn(graph, LabelAssignment({0: 1.0, 4: 1.0}), tol=1e-12)
        assert np.allclose(sol.u, 1.0, atol=1e-10)

    def test_all_zero_labels(self):
        graph = path_graph([1.0, 1.0, 1.0])
        sol = laplace_learn(graph, LabelAssignment({0: 0.0, 3: 0.0}))
        assert np.allclose(sol.u, 0.0)
        assert sol.iterations == 0


class TestSolverContracts:
    def test_all_nodes_labeled_returns_verbatim(self):
        graph = path_graph([1.0, 1.0])
        sol = laplace_learn(graph, LabelAssignment({0: 1.0, 1: 0.25, 2: 0.0}))
        assert sol.u.tolist() == [1.0, 0.25, 0.0]
        assert sol.iterations == 0

    def test_labels_reproduced_exactly(self, rng):
        vectors = random_unit_vectors(rng, 40, 5)
        graph = build_similarity_graph(vectors, K=6)
        labels = LabelAssignment({3: 1.0, 17: 0.0, 29: 0.75})
        sol = laplace_learn(graph, labels)
        for node, value in labels.labels.items():
            assert sol.u[node] == value

    def test_conflicting_duplicate_labels(self):
        with pytest.raises(ParameterError):
            LabelAssignment.from_pairs([(0, 1.0), (0, 0.0)])

    def test_empty_labels(self):
        with pytest.raises(ParameterError):
            LabelAssignment({})

    def test_label_out_of_range(self):
        with pytest.raises(ParameterError):
            LabelAssignment({0: 1.5})

    def test_nonconvergence_raises(self, rng):
        vectors = random_unit_vectors(rng, 60, 4)
        graph = build_similarity_graph(vectors, K=8)
        with pytest.raises(SolverError) as err:
            laplace_learn(graph, LabelAssignment({0: 1.0, 59: 0.0}), tol=1e-14, max_iter=1)
        assert err.value.residual is not None


class TestNumericalProperties:
    def test_matches_dense_oracle(self, rng):
        for _ in range(10):
            n = int(rng.integers(20, 60))
            vectors = random_unit_vectors(rng, n, 5)
            graph = build_similarity_graph(vectors, K=6)
            labeled = rng.choice(n, size=6, replace=False)
            labels = LabelAssignment.from_pairs(
                [(int(i), float(v)) for i, v in zip(labeled, rng.integers(0, 2, 6))])
            sol = laplace_learn(graph, labels)
            oracle = dense_harmonic_oracle(graph, labels)
            assert np.max(np.abs(sol.u - oracle)) <= 1e-6

    def test_harmonicity_at_unlabeled_nodes(self, rng):
        vectors = random_unit_vectors(rng, 50, 5)
        graph = build_similarity_graph(vectors, K=7)
        labels = LabelAssignment({0: 1.0, 1: 1.0, 48: 0.0, 49: 0.0})
        sol = laplace_learn(graph, labels, tol=1e-8)
        W = graph.weights.toarray()
        L = np.diag(W.sum(axis=1)) - W
        degree = W.sum(axis=1)
        residual = L @ sol.u
        unlabeled = [i for i in range(50) if i not in labels.labels]
        rel = np.abs(residual[unlabeled]) / (degree[unlabeled] * 1.0)
        assert np.max(rel) <= 1e-7

    def test_maximum_principle(self, rng):
        vectors = random_unit_vectors(rng, 45, 4)
        graph = build_similarity_graph(vectors, K=6)
        labels = LabelAssignment({2: 0.9, 7: 0.3, 40: 0.3})
        sol = laplace_learn(graph, labels)
        assert sol.u.min() >= 0.3 - 1e-6
        assert sol.u.max() <= 0.9 + 1e-6

    def test_comparison_principle_extra_positive_label(self):
        # Fixed 6-node ladder; adding one more label-1 node can only raise u.
        W = np.zeros((6, 6))
        edges = [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.0), (4, 5, 0.7), (1, 4, 0.3)]
        for i, j, w in edges:
            W[i, j] = W[j, i] = w
        graph = SimilarityGraph.from_weights(W)
        base = laplace_learn(graph, LabelAssignment({0: 1.0, 5: 0.0}), tol=1e-12)
        more = laplace_learn(graph, LabelAssignment({0: 1.0, 5: 0.0, 2: 1.0}), tol=1e-12)
        assert np.all(more.u >= base.u - 1e-9)

    def test_residual_reported(self, rng):
        vectors = random_unit_vectors(rng, 30, 4)
        graph = build_similarity_graph(vectors, K=5)
        sol = laplace_learn(graph, LabelAssignment({0: 1.0, 29: 0.0}))
        assert 0.0 <= sol.residual <= 1e-8
        assert sol.iterations >= 1
