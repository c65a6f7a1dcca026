"""Sparse KNN similarity graph over embedding vectors.

Edges carry Gaussian-of-angle weights with a self-tuning per-node
bandwidth: w(v_i, v_j) = exp(-angle(v_i, v_j)^2 / sqrt(tau_i * tau_j)),
where tau_i is the angle from node i to its K-th nearest neighbor
(counting the node itself as the first entry of its neighbor list).
The directed KNN weight matrix is symmetrized by averaging with its
transpose, which halves one-sided neighbor relations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import AutoKGError, DegenerateVectorError, ParameterError

# Floor for the self-tuning bandwidth: duplicate vectors give tau = 0,
# which would put 0/0 in the weight exponent.
TAU_MIN = 1e-8

GRAPH_FORMAT_VERSION = 1

_ROW_CHUNK = 1024


def angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two vectors in radians, in [0, pi].

    The cosine is clamped to [-1, 1] before arccos so that numerically
    degenerate dot products never produce NaN.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("angle is undefined for zero-norm vectors")
    cos = float(np.dot(u, v)) / (nu * nv)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def similarity_weight(u: np.ndarray, v: np.ndarray, tau_u: float, tau_v: float) -> float:
    """Gaussian-of-angle similarity exp(-angle(u,v)^2 / sqrt(tau_u * tau_v))."""
    tau_u = max(float(tau_u), TAU_MIN)
    tau_v = max(float(tau_v), TAU_MIN)
    theta = angle(u, v)
    return float(np.exp(-(theta * theta) / np.sqrt(tau_u * tau_v)))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ParameterError(f"expected a 2-D (n, d) array, got shape {vectors.shape}")
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise DegenerateVectorError(f"zero-norm vectors at nodes {zero.tolist()}")
    return vectors / norms[:, None]


def angles_to_vectors(query: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Angles (radians) from `query` to every row of `vectors`."""
    unit = _unit_rows(vectors)
    q = np.asarray(query, dtype=np.float64)
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        raise DegenerateVectorError("angle is undefined for zero-norm vectors")
    cos = unit @ (q / nq)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def _knn_with_angles(vectors: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    unit = _unit_rows(vectors)
    n = unit.shape[0]
    ids = np.arange(n)
    neighbors = np.empty((n, K), dtype=np.int64)
    neighbor_angles = np.empty((n, K), dtype=np.float64)
    for start in range(0, n, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n)
        cos = unit[start:stop] @ unit.T
        theta = np.arccos(np.clip(cos, -1.0, 1.0))
        rows = np.arange(start, stop)
        theta[rows - start, rows] = 0.0
        # Sort key pins each node first in its own list (sentinel below any
        # real angle); remaining ties break toward the smaller node id.
        key = theta.copy()
        key[rows - start, rows] = -1.0
        order = np.lexsort((np.broadcast_to(ids, key.shape), key), axis=-1)[:, :K]
        neighbors[start:stop] = order
        neighbor_angles[start:stop] = np.take_along_axis(theta, order, axis=1)
    return neighbors, neighbor_angles


def knn(vectors: np.ndarray, K: int) -> np.ndarray:
    """Exact K-nearest-neighbor lists by angle, one row per node.

    Each row is sorted ascending by angle with the node itself first
    (angle 0); ties break toward the smaller node id. Requires
    1 <= K <= n_nodes.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if K > n:
        raise ParameterError(f"K={K} exceeds the number of nodes {n}")
    return _knn_with_angles(vectors, K)[0]


@dataclass
class SimilarityGraph:
    """Sparse symmetric nonnegative weight matrix over text-block nodes."""

    n_nodes: int
    K: int
    weights: sp.csr_matrix
    tau: np.ndarray | None = None

    def validate(self) -> None:
        W = self.weights
        if W.shape != (self.n_nodes, self.n_nodes):
            raise ParameterError("weight matrix shape does not match n_nodes")
        asym = abs(W - W.T)
        if asym.nnz and asym.max() != 0.0:
            raise ParameterError("weight matrix is not symmetric")
        if W.nnz and W.min() < 0.0:
            raise ParameterError("weight matrix has negative entries")
        if np.any(W.diagonal() != 0.0):
            raise ParameterError("weight matrix has nonzero diagonal entries")
        if not self.is_connected():
            raise ParameterError("similarity graph is disconnected")

    def is_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        n_comp, _ = connected_components(self.weights, directed=False)
        return n_comp == 1

    def degrees(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    @classmethod
    def from_weights(cls, W, K: int = 0, tau: np.ndarray | None = None) -> "SimilarityGraph":
        """Wrap an explicit symmetric weight matrix (dense or sparse)."""
        W = sp.csr_matrix(W, dtype=np.float64)
        W = ((W + W.T) * 0.5).tocsr()
        W.setdiag(0.0)
        W.eliminate_zeros()
        return cls(n_nodes=W.shape[0], K=K, weights=W, tau=tau)


def build_similarity_graph(vectors: np.ndarray, K: int = 30) -> SimilarityGraph:
    """Build the symmetric KNN similarity graph for the given vectors.

    tau_i is the angle to the K-th entry of node i's neighbor list (the
    list includes the node itself), floored at TAU_MIN. If the symmetrized
    graph is disconnected, K escalates by +10 (capped at n_nodes) and the
    build repeats; the K actually used is recorded on the result.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n < 2:
        raise ParameterError(f"need at least 2 nodes, got {n}")
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    K = min(K, n)

    while True:
        neighbors, theta = _knn_with_angles(vectors, K)
        tau = np.maximum(theta[:, K - 1], TAU_MIN)
        rows = np.repeat(np.arange(n), K)
        cols = neighbors.ravel()
        flat_theta = theta.ravel()
        w = np.exp(-(flat_theta ** 2) / np.sqrt(tau[rows] * tau[cols]))
        directed = sp.coo_matrix((w, (rows, cols)), shape=(n, n))
        W = ((directed.tocsr() + directed.tocsr().T) * 0.5).tocsr()
        W.setdiag(0.0)
        W.eliminate_zeros()
        graph = SimilarityGraph(n_nodes=n, K=K, weights=W, tau=tau)
        if graph.is_connected():
            return graph
        if K >= n:
            raise AutoKGError("internal: similarity graph disconnected even at K = n_nodes")
        K = min(K + 10, n)


@dataclass
class GraphLaplacian:
    """Unnormalized Laplacian L = D - W with its degree vector."""

    degree: np.ndarray
    laplacian: sp.csr_matrix

    @property
    def nnz(self) -> int:
        return self.laplacian.nnz


def laplacian(graph: SimilarityGraph) -> GraphLaplacian:
    degree = graph.degrees()
    L = (sp.diags(degree) - graph.weights).tocsr()
    return GraphLaplacian(degree=degree, laplacian=L)


def save_graph(graph: SimilarityGraph, path: str | Path) -> None:
    """Persist the graph as JSON: header + upper-triangle COO triplets + tau."""
    coo = sp.triu(graph.weights, k=1).tocoo()
    payload = {
        "header": {
            "n_nodes": graph.n_nodes,
            "K_final": graph.K,
            "format_version": GRAPH_FORMAT_VERSION,
        },
        "triplets": [[int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)],
        "tau": None if graph.tau is None else [float(t) for t in graph.tau],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_graph(path: str | Path) -> SimilarityGraph:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    header = payload["header"]
    if header["format_version"] != GRAPH_FORMAT_VERSION:
        raise AutoKGError(f"unsupported graph format version {header['format_version']}")
    n = header["n_nodes"]
    triplets = payload["triplets"]
    if triplets:
        i, j, v = zip(*triplets)
    else:
        i, j, v = (), (), ()
    upper = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
    W = (upper + upper.T).tocsr()
    tau = payload["tau"]
    return SimilarityGraph(
        n_nodes=n,
        K=header["K_final"],
        weights=W,
        tau=None if tau is None else np.asarray(tau, dtype=np.float64),
    )
