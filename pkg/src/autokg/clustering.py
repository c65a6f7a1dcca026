"""K-means and spectral clustering over block embeddings, plus the
center/random sampler that picks representative blocks per cluster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .errors import ParameterError, SolverError
from .simgraph import SimilarityGraph

DEFAULT_MAX_ITER = 300
# Above this node count the spectral step switches from a dense
# eigendecomposition to shift-inverted Lanczos.
DENSE_EIG_THRESHOLD = 3000


@dataclass
class ClusterResult:
    algorithm: str  # "kmeans" or "spectral"
    assignments: np.ndarray
    centers: np.ndarray
    seed: int
    iterations: int = 0
    # Points in the space the centers live in: the input embeddings for
    # k-means, the row-normalized spectral embedding for spectral.
    space_vectors: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    def members(self, cluster_id: int) -> np.ndarray:
        return np.where(self.assignments == cluster_id)[0]


@dataclass
class ClusterSample:
    cluster_id: int
    center_blocks: list[int]
    random_blocks: list[int]

    def all_blocks(self) -> list[int]:
        return self.center_blocks + self.random_blocks


def _kmeans_pp_init(vectors: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    n_points = vectors.shape[0]
    centers = np.empty((n, vectors.shape[1]), dtype=np.float64)
    first = int(rng.integers(n_points))
    centers[0] = vectors[first]
    closest_sq = np.sum((vectors - centers[0]) ** 2, axis=1)
    for k in range(1, n):
        total = float(closest_sq.sum())
        if total <= 0.0:
            # All remaining points coincide with a chosen center.
            idx = int(rng.integers(n_points))
        else:
            idx = int(rng.choice(n_points, p=closest_sq / total))
        centers[k] = vectors[idx]
        closest_sq = np.minimum(closest_sq, np.sum((vectors - centers[k]) ** 2, axis=1))
    return centers


def _repair_empty_clusters(vectors, assignments, centers, empty_ids):
    """Move the point farthest from its own center into each empty cluster."""
    dist_sq = np.sum((vectors - centers[assignments]) ** 2, axis=1)
    for cid in empty_ids:
        counts = np.bincount(assignments, minlength=centers.shape[0])
        movable = counts[assignments] >= 2
        if not movable.any():
            raise ParameterError("cannot repair empty cluster: no movable points")
        candidates = np.where(movable)[0]
        donor = candidates[int(np.argmax(dist_sq[candidates]))]
        assignments[donor] = cid
        dist_sq[donor] = 0.0
    return assignments


def kmeans(vectors: np.ndarray, n: int, I_max: int = DEFAULT_MAX_ITER, seed: int = 0) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding, Euclidean metric.

    Runs to an assignment fixpoint or I_max iterations. Empty clusters are
    repaired by reassigning the point farthest from its current center, so
    every cluster id appears at least once in the result.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n_points = vectors.shape[0]
    if not 1 <= n <= n_points:
        raise ParameterError(f"cluster count n={n} must be in 1..{n_points}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(vectors, n, rng)

    assignments = np.zeros(n_points, dtype=np.int64)
    iterations = 0
    for iterations in range(1, I_max + 1):
        # Squared distances to each center; argmin ties resolve to the
        # smallest center id.
        dists = (
            np.sum(vectors ** 2, axis=1)[:, None]
            - 2.0 * vectors @ centers.T
            + np.sum(centers ** 2, axis=1)[None, :]
        )
        new_assignments = np.argmin(dists, axis=1).astype(np.int64)
        counts = np.bincount(new_assignments, minlength=n)
        if (counts == 0).any():
            new_assignments = _repair_empty_clusters(
                vectors, new_assignments, centers, np.where(counts == 0)[0]
            )
        if iterations > 1 and np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
        for cid in range(n):
            members = vectors[assignments == cid]
            centers[cid] = members.mean(axis=0)
    return ClusterResult(
        algorithm="kmeans", assignments=assignments, centers=centers,
        seed=seed, iterations=iterations, space_vectors=vectors,
    )


def _smallest_eigvecs(L_sym: sp.csr_matrix, n: int) -> np.ndarray:
    size = L_sym.shape[0]
    if size <= DENSE_EIG_THRESHOLD:
        _, vecs = scipy.linalg.eigh(L_sym.toarray(), subset_by_index=[0, n - 1])
        return vecs
    try:
        # Shift-invert targets the smallest eigenvalues of the PSD matrix.
        _, vecs = sp.linalg.eigsh(L_sym.tocsc(), k=n, sigma=-1e-5, which="LM", tol=1e-8)
    except Exception as exc:
        raise SolverError(f"spectral eigendecomposition failed: {exc}") from exc
    return vecs


def spectral(graph: SimilarityGraph, n: int, I_max: int = DEFAULT_MAX_ITER, seed: int = 0) -> ClusterResult:
    """Normalized spectral clustering on the similarity graph.

    Uses the n eigenvectors of smallest eigenvalue of
    L_sym = I - D^{-1/2} W D^{-1/2}, row-normalizes the spectral embedding,
    and hands the rows to seeded k-means.
    """
    if not 1 <= n <= graph.n_nodes:
        raise ParameterError(f"cluster count n={n} must be in 1..{graph.n_nodes}")
    degree = graph.degrees()
    if np.any(degree <= 0.0):
        raise ParameterError("spectral clustering requires every node to have positive degree")
    inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    L_sym = (sp.identity(graph.n_nodes) - inv_sqrt @ graph.weights @ inv_sqrt).tocsr()

    embedding = _smallest_eigvecs(L_sym, n)
    norms = np.linalg.norm(embedding, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    embedding = embedding / safe[:, None]

    inner = kmeans(embedding, n, I_max=I_max, seed=seed)
    return ClusterResult(
        algorithm="spectral", assignments=inner.assignments, centers=inner.centers,
        seed=seed, iterations=inner.iterations, space_vectors=embedding,
    )


def _angles_to_center(center: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    # Zero-norm center or member: treat the pair angle as pi/2 so ordering
    # falls through to the id tie-break deterministically.
    norms = np.linalg.norm(vectors, axis=1)
    c_norm = float(np.linalg.norm(center))
    if c_norm == 0.0:
        return np.full(vectors.shape[0], np.pi / 2.0)
    cos = np.zeros(vectors.shape[0])
    ok = norms > 0.0
    cos[ok] = (vectors[ok] @ center) / (norms[ok] * c_norm)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def sample_cluster(
    member_ids: np.ndarray,
    member_vectors: np.ndarray,
    center: np.ndarray,
    c: int,
    seed: int = 0,
    cluster_id: int = -1,
) -> ClusterSample:
    """Pick up to c blocks nearest the center by angle plus c random others.

    Ties on angle break toward the smaller block id; the random half is
    drawn uniformly without replacement from the remainder. A cluster of
    size <= 2c is returned whole.
    """
    if c < 1:
        raise ParameterError(f"c must be >= 1, got {c}")
    member_ids = np.asarray(member_ids, dtype=np.int64)
    if member_ids.size == 0:
        raise ParameterError("cannot sample from an empty cluster")
    angles = _angles_to_center(np.asarray(center, dtype=np.float64),
                               np.asarray(member_vectors, dtype=np.float64))
    order = np.lexsort((member_ids, angles))
    nearest = member_ids[order[:c]]
    remainder = member_ids[order[c:]]
    rng = np.random.default_rng(seed)
    take = min(c, remainder.size)
    random_pick = rng.choice(remainder, size=take, replace=False) if take else np.array([], dtype=np.int64)
    return ClusterSample(
        cluster_id=cluster_id,
        center_blocks=[int(i) for i in nearest],
        random_blocks=[int(i) for i in random_pick],
    )
