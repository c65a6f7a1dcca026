"""Harmonic label propagation on a similarity graph.

Given boundary values y on a labeled subset of nodes, solve for the
function u that equals y on the labeled nodes and is harmonic everywhere
else: (L u)_i = 0 at every unlabeled node i, where L = D - W. After
eliminating the labeled rows this is the symmetric positive-definite
system L_uu u_u = W_ul y_l, solved here with Jacobi-preconditioned
conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, SolverError
from .simgraph import SimilarityGraph

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class LabelAssignment:
    """Boundary conditions: node id -> label value in [0, 1]."""

    labels: Mapping[int, float]

    def __post_init__(self):
        if not self.labels:
            raise ParameterError("labeled set must be non-empty")
        for node, value in self.labels.items():
            if not (0.0 <= value <= 1.0):
                raise ParameterError(f"label for node {node} outside [0, 1]: {value}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "LabelAssignment":
        """Build from (node, value) pairs; conflicting duplicates fail fast."""
        labels: dict[int, float] = {}
        for node, value in pairs:
            if node in labels and labels[node] != value:
                raise ParameterError(f"conflicting labels for node {node}")
            labels[node] = float(value)
        return cls(labels)

    def split(self, n_nodes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (labeled ids, label values, unlabeled ids) as arrays."""
        labeled = np.array(sorted(self.labels), dtype=np.int64)
        if labeled.size and (labeled[0] < 0 or labeled[-1] >= n_nodes):
            raise ParameterError("label node id out of range")
        values = np.array([self.labels[i] for i in labeled], dtype=np.float64)
        mask = np.ones(n_nodes, dtype=bool)
        mask[labeled] = False
        return labeled, values, np.where(mask)[0]


@dataclass
class HarmonicSolution:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool = field(default=True)


def _jacobi_pcg(A: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int,
                harmonic_scale: np.ndarray | None = None) -> tuple[np.ndarray, float, int, bool]:
    """Conjugate gradients on SPD `A` with diagonal preconditioning.

    Iterates until ||r||_2 <= tol * ||b||_2 and, when `harmonic_scale` is
    given, additionally until max_i |r_i| / harmonic_scale_i <= 10 * tol,
    which pins the per-node harmonic defect independently of the graph's
    degree spread.
    """
    n = b.shape[0]
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n), 0.0, 0, True

    diag = A.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)

    def done(r: np.ndarray) -> bool:
        if float(np.linalg.norm(r)) > tol * norm_b:
            return False
        if harmonic_scale is not None:
            return float(np.max(np.abs(r) / harmonic_scale)) <= 10.0 * tol
        return True

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if done(r):
            return x, float(np.linalg.norm(r)) / norm_b, iterations, True
        z = inv_diag * r
        rz_next = float(r @ z)
        beta = rz_next / rz
        rz = rz_next
        p = z + beta * p
    return x, float(np.linalg.norm(r)) / norm_b, iterations, False


def laplace_learn(
    graph: SimilarityGraph,
    labels: LabelAssignment,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> HarmonicSolution:
    """Propagate boundary labels harmonically across the graph.

    Parameters
    ----------
    graph : SimilarityGraph
        Connected weighted graph over all nodes.
    labels : LabelAssignment
        Dirichlet boundary values in [0, 1]; at least one node.
    tol : float
        Relative residual target for the conjugate gradient solve.
    max_iter : int, optional
        Iteration cap; defaults to 10x the number of unlabeled nodes.

    Returns
    -------
    HarmonicSolution
        Full-length u (labels reproduced exactly on labeled nodes), the
        final relative residual, and the iteration count.

    Raises
    ------
    SolverError
        If the conjugate gradient loop hits max_iter before converging.
    """
    n = graph.n_nodes
    labeled, values, unlabeled = labels.split(n)

    u = np.zeros(n, dtype=np.float64)
    u[labeled] = values
    if unlabeled.size == 0:
        return HarmonicSolution(u=u, residual=0.0, iterations=0)

    W = graph.weights
    degree = graph.degrees()
    L = sp.diags(degree) - W
    A = L[unlabeled][:, unlabeled].tocsr()
    b = np.asarray(W[unlabeled][:, labeled] @ values).ravel()

    if max_iter is None:
        max_iter = max(10 * unlabeled.size, 10)

    scale = None
    max_y = float(np.max(np.abs(values)))
    if max_y > 0.0:
        scale = np.maximum(degree[unlabeled], np.finfo(np.float64).tiny) * max_y

    x, residual, iterations, converged = _jacobi_pcg(A, b, tol, max_iter, harmonic_scale=scale)
    if not converged:
        raise SolverError(
            f"conjugate gradient did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})",
            residual=residual,
            iterations=iterations,
        )
    u[unlabeled] = x
    return HarmonicSolution(u=u, residual=residual, iterations=iterations)
