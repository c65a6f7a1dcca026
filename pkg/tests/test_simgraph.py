import math

import numpy as np
import pytest
import scipy.sparse as sp

from autokg.errors import DegenerateVectorError, ParameterError
from autokg.simgraph import (
    SimilarityGraph,
    angle,
    build_similarity_graph,
    knn,
    laplacian,
    load_graph,
    save_graph,
    similarity_weight,
)
from conftest import random_unit_vectors


def circle(degrees, d=4):
    r = math.radians(degrees)
    v = np.zeros(d)
    v[0], v[1] = math.cos(r), math.sin(r)
    return v


class TestAngle:
    def test_identical(self):
        v = np.array([0.3, -0.2, 0.9])
        assert angle(v, v) == pytest.approx(0.0, abs=1e-7)

    def test_orthogonal(self):
        assert angle(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(math.pi / 2)

    def test_forty_five_degrees(self):
        u = np.array([1.0, 0.0])
        v = np.array([1.0, 1.0]) / math.sqrt(2)
        assert angle(u, v) == pytest.approx(math.pi / 4, abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateVectorError):
            angle(np.zeros(3), np.ones(3))

    def test_antipodal_clamped(self):
        v = np.array([1.0, 2.0, 3.0])
        assert angle(v, -v) == pytest.approx(math.pi, abs=1e-7)


class TestSimilarityWeight:
    def test_identical_vectors_weight_one(self):
        v = np.array([0.5, 0.5, 0.1])
        assert similarity_weight(v, v, 0.7, 2.0) == pytest.approx(1.0, abs=1e-9)

    def test_right_angle_tau_right_angle(self):
        # exp(-theta^2 / theta) with theta = pi/2
        w = similarity_weight(circle(0), circle(90), math.pi / 2, math.pi / 2)
        assert w == pytest.approx(math.exp(-math.pi / 2), abs=1e-9)
        assert w == pytest.approx(0.2078795763507619, abs=1e-9)

    def test_half_radian_mixed_tau(self):
        # exp(-0.25 / sqrt(0.25 * 1.0)) = exp(-0.5)
        w = similarity_weight(circle(0), circle(math.degrees(0.5)), 0.25, 1.0)
        assert w == pytest.approx(math.exp(-0.5), abs=1e-9)
        assert w == pytest.approx(0.6065306597126334, abs=1e-9)

    def test_tau_floor_handles_duplicates(self):
        v = np.array([1.0, 0.0])
        assert similarity_weight(v, v, 0.0, 0.0) == pytest.approx(1.0, abs=1e-9)


def brute_force_knn(vectors, K):
    """Independent O(n^2) oracle: per-row sort by (angle, not-self, id)."""
    n = len(vectors)
    out = []
    for i in range(n):
        pairs = []
        for j in range(n):
            if i == j:
                theta = 0.0
            else:
                cos = float(np.dot(vectors[i], vectors[j])
                            / (np.linalg.norm(vectors[i]) * np.linalg.norm(vectors[j])))
                theta = math.acos(max(-1.0, min(1.0, cos)))
            pairs.append((theta, 0 if i == j else 1, j))
        pairs.sort()
        out.append([j for _, _, j in pairs[:K]])
    return out


class TestKnn:
    def test_three_points_on_circle(self):
        vectors = np.vstack([circle(0), circle(10), circle(90)])
        expected = brute_force_knn(vectors, 2)
        assert knn(vectors, 2).tolist() == expected
        assert knn(vectors, 2)[0].tolist() == [0, 1]

    def test_full_k_is_permutation(self, rng):
        vectors = random_unit_vectors(rng, 17, 5)
        lists = knn(vectors, 17)
        for row in lists:
            assert sorted(row.tolist()) == list(range(17))

    def test_duplicate_tie_break(self):
        vectors = np.vstack([circle(i * 7) for i in range(7)])
        vectors[5] = vectors[2]
        lists = knn(vectors, 2)
        assert lists[2].tolist() == [2, 5]
        assert lists[5].tolist() == [5, 2]

    def test_matches_brute_force(self, rng):
        vectors = random_unit_vectors(rng, 120, 6)
        assert knn(vectors, 9).tolist() == brute_force_knn(vectors, 9)

    def test_parameter_errors(self, rng):
        vectors = random_unit_vectors(rng, 5, 3)
        with pytest.raises(ParameterError):
            knn(vectors, 0)
        with pytest.raises(ParameterError):
            knn(vectors, 6)

    def test_scaling_invariance(self, rng):
        vectors = random_unit_vectors(rng, 60, 8)
        assert np.array_equal(knn(vectors, 7), knn(vectors * 3.7, 7))


def union_find_components(n, rows, cols):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(rows, cols):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(n)})


class TestBuildSimilarityGraph:
    def test_two_identical_vectors(self):
        vectors = np.vstack([circle(30), circle(30)])
        graph = build_similarity_graph(vectors, K=2)
        W = graph.weights.toarray()
        assert W[0, 1] == pytest.approx(1.0, abs=1e-6)
        assert W[1, 0] == W[0, 1]
        assert W[0, 0] == 0.0

    def test_disconnected_pairs_escalate(self):
        # Two tight pairs, far apart; at K=2 each node only sees its twin.
        vectors = np.vstack([circle(0), circle(1), circle(120), circle(121)])
        graph = build_similarity_graph(vectors, K=2)
        assert graph.K == 4
        assert graph.is_connected()

    def test_one_sided_neighbor_weight_halved(self):
        # Tight cluster of four plus an outlier: the outlier lists a cluster
        # node among its 2-NN but no cluster node lists the outlier.
        vectors = np.vstack([circle(0), circle(1), circle(2), circle(3), circle(60)])
        lists = knn(vectors, 2)
        assert lists[4].tolist()[1] == 3
        assert all(4 not in lists[i].tolist() for i in range(4))
        graph = build_similarity_graph(vectors, K=2)
        tau = graph.tau
        expected = similarity_weight(vectors[4], vectors[3], tau[4], tau[3]) / 2.0
        assert graph.weights[4, 3] == pytest.approx(expected, rel=1e-12)
        assert graph.weights[3, 4] == graph.weights[4, 3]

    def test_symmetry_exact_and_sparsity(self, rng):
        vectors = random_unit_vectors(rng, 80, 6)
        graph = build_similarity_graph(vectors, K=10)
        diff = graph.weights - graph.weights.T
        assert diff.nnz == 0 or abs(diff).max() == 0.0
        assert graph.weights.nnz <= 2 * graph.K * graph.n_nodes
        assert graph.weights.diagonal().max() == 0.0

    def test_connectivity_union_find_oracle(self, rng):
        vectors = random_unit_vectors(rng, 70, 5)
        graph = build_similarity_graph(vectors, K=8)
        coo = graph.weights.tocoo()
        assert union_find_components(graph.n_nodes, coo.row, coo.col) == 1

    def test_tau_uses_kth_neighbor_including_self(self):
        vectors = np.vstack([circle(0), circle(10), circle(25), circle(45)])
        graph = build_similarity_graph(vectors, K=3)
        lists = knn(vectors, 3)
        for i in range(4):
            expected = angle(vectors[i], vectors[lists[i][-1]])
            assert graph.tau[i] == pytest.approx(max(expected, 1e-8), rel=1e-12)

    def test_needs_two_nodes(self):
        with pytest.raises(ParameterError):
            build_similarity_graph(np.ones((1, 3)), K=1)


class TestLaplacian:
    def test_path_graph_matrix(self):
        W = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        lap = laplacian(SimilarityGraph.from_weights(W))
        expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
        assert np.allclose(lap.laplacian.toarray(), expected)
        assert lap.nnz == 7

    def test_row_sums_zero(self, rng):
        vectors = random_unit_vectors(rng, 40, 5)
        graph = build_similarity_graph(vectors, K=6)
        lap = laplacian(graph)
        ones = np.ones(graph.n_nodes)
        scale = max(1.0, float(lap.degree.max()))
        assert np.max(np.abs(lap.laplacian @ ones)) / scale <= 1e-9

    def test_complete_graph_eigenvalues(self):
        W = np.ones((3, 3)) - np.eye(3)
        lap = laplacian(SimilarityGraph.from_weights(W))
        eigenvalues = np.linalg.eigvalsh(lap.laplacian.toarray())
        assert np.allclose(sorted(eigenvalues), [0.0, 3.0, 3.0], atol=1e-9)

    def test_positive_semidefinite(self, rng):
        vectors = random_unit_vectors(rng, 50, 4)
        lap = laplacian(build_similarity_graph(vectors, K=7))
        for _ in range(100):
            x = rng.normal(size=50)
            assert x @ (lap.laplacian @ x) >= -1e-9


class TestGraphSerialization:
    def test_round_trip(self, rng):
        vectors = random_unit_vectors(rng, 25, 4)
        graph = build_similarity_graph(vectors, K=5)
        path = None
        import tempfile, os
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "graph.json")
            save_graph(graph, path)
            again = load_graph(path)
        assert again.n_nodes == graph.n_nodes
        assert again.K == graph.K
        assert (abs(again.weights - graph.weights)).nnz == 0
        assert np.allclose(again.tau, graph.tau)

    def test_stored_upper_triangle_only(self, tmp_path, rng):
        import json

        vectors = random_unit_vectors(rng, 12, 4)
        graph = build_similarity_graph(vectors, K=4)
        save_graph(graph, tmp_path / "g.json")
        payload = json.loads((tmp_path / "g.json").read_text())
        assert len(payload["triplets"]) == sp.triu(graph.weights, k=1).nnz
        assert all(i < j for i, j, _ in payload["triplets"])
