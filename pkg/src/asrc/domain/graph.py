"""Adaptive sparse graph learning on embedding distances.

Each row of the raw graph is the solution of a sparse, simplex-constrained
problem over the distances from one node to all others. With a uniform
prior the solution is closed form and puts mass on exactly the k nearest
candidates, the node itself included, so self-loops appear on their own
and every degree stays positive.
"""
import logging
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from scipy import sparse

from asrc.domain.numerics import DataMatrix, IsolatedNode, pairwise_dist

logger = logging.getLogger(__name__)

DEGENERATE_GAP = 1e-15


@dataclass(frozen=True)
class EdgeList:
    i: np.ndarray
    j: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return int(self.i.size)

    @classmethod
    def empty(cls) -> "EdgeList":
        index = np.zeros(0, dtype=np.int64)
        return cls(index, index.copy(), np.zeros(0))


@dataclass(frozen=True)
class SparseRowGraph:
    matrix: sparse.csr_matrix
    k: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        start, stop = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[start:stop], self.matrix.data[start:stop]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class SymGraph:
    adjacency: sparse.csr_matrix
    degrees: np.ndarray
    normalized: sparse.csr_matrix
    edges: EdgeList

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class SparsitySchedule:
    k0: int
    s: int
    T1: int
    n: int
    k: int
    iteration: int = 0

    @classmethod
    def start(cls, k0: int, s: int, T1: int, n: int) -> "SparsitySchedule":
        if k0 < 2:
            raise ValueError(f"k0 must be at least 2, got {k0}")
        if n < 2:
            raise ValueError("a graph needs at least two nodes")
        return cls(k0=k0, s=s, T1=T1, n=n, k=min(k0, n - 1))

    @property
    def finished(self) -> bool:
        return self.iteration >= self.T1


def advance_sparsity(sched: SparsitySchedule) -> SparsitySchedule:
    return replace(
        sched,
        k=min(sched.k + sched.s, sched.n - 1),
        iteration=sched.iteration + 1,
    )


def _ascending(d_row: np.ndarray) -> np.ndarray:
    # stable sort: equal distances keep ascending index order
    return np.argsort(d_row, kind="stable")


def sparsity_dual_value(d_row: np.ndarray, k: int) -> float:
    d_row = np.asarray(d_row, dtype=float)
    d_sorted = d_row[_ascending(d_row)]
    return float(k * d_sorted[k] - d_sorted[:k].sum())


def learn_row_probabilities(
    d_row: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form sparse row over the k nearest candidates.

    Returns (indices, probabilities); when the k+1 smallest distances
    coincide the row is uniform over the k nearest.
    """
    d_row = np.asarray(d_row, dtype=float)
    if not 1 <= k <= d_row.size - 1:
        raise ValueError(f"k={k} outside [1, {d_row.size - 1}]")
    order = _ascending(d_row)
    nearest = order[:k]
    d_sorted = d_row[order]
    gap = k * d_sorted[k] - d_sorted[:k].sum()
    if gap <= DEGENERATE_GAP:
        return nearest, np.full(k, 1.0 / k)
    return nearest, np.maximum(d_sorted[k] - d_sorted[:k], 0.0) / gap


def project_simplex(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    c_sorted = c[np.argsort(-c, kind="stable")]
    partial = np.cumsum(c_sorted) - 1.0
    index = np.arange(1, c.size + 1)
    r = index[c_sorted - partial / index > 0][-1]
    theta = partial[r - 1] / r
    return np.maximum(c - theta, 0.0)


def solve_prior_problem(
    d: np.ndarray, q: np.ndarray, gamma: float, k: int
) -> np.ndarray:
    """min <p, d> + gamma/2 ||p - q||^2 over the simplex with ||p||_0 <= k."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = np.asarray(d, dtype=float)
    q = np.asarray(q, dtype=float)
    if not 1 <= k <= d.size:
        raise ValueError(f"k={k} outside [1, {d.size}]")
    c = q - d / gamma
    support = np.argsort(-c, kind="stable")[:k]
    p = np.zeros_like(c)
    p[support] = project_simplex(c[support])
    return p


def learn_graph(Z: DataMatrix, k: int) -> SparseRowGraph:
    """Raw directed graph from the Euclidean distances between rows of Z."""
    D = pairwise_dist(Z)
    n = D.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    order = np.argsort(D, axis=1, kind="stable")[:, : k + 1]
    d_sorted = np.take_along_axis(D, order, axis=1)
    gap = k * d_sorted[:, k] - d_sorted[:, :k].sum(axis=1)
    degenerate = gap <= DEGENERATE_GAP
    safe_gap = np.where(degenerate, 1.0, gap)
    weights = np.maximum(d_sorted[:, k : k + 1] - d_sorted[:, :k], 0.0)
    weights = weights / safe_gap[:, None]
    weights[degenerate] = 1.0 / k
    if degenerate.any():
        logger.debug(f"{int(degenerate.sum())} rows fell back to uniform")

    matrix = sparse.csr_matrix(
        (
            weights.ravel(),
            (np.repeat(np.arange(n), k), order[:, :k].ravel()),
        ),
        shape=(n, n),
    )
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return SparseRowGraph(matrix=matrix, k=k)


def symmetrize_normalize(P: SparseRowGraph) -> SymGraph:
    adjacency = ((P.matrix + P.matrix.T) * 0.5).tocsr()
    adjacency.sort_indices()
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    if np.any(degrees <= 0):
        isolated = np.flatnonzero(degrees <= 0)
        raise IsolatedNode(f"nodes without any edge weight: {isolated[:10]}")
    scale = sparse.diags(1.0 / np.sqrt(degrees))
    normalized = (scale @ adjacency @ scale).tocsr()

    upper = sparse.triu(adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    edges = EdgeList(
        i=upper.row[order].astype(np.int64),
        j=upper.col[order].astype(np.int64),
        weights=upper.data[order],
    )
    return SymGraph(
        adjacency=adjacency,
        degrees=degrees,
        normalized=normalized,
        edges=edges,
    )


def graph_from_dense(P: np.ndarray, k: int) -> SparseRowGraph:
    matrix = sparse.csr_matrix(np.asarray(P, dtype=float))
    matrix.eliminate_zeros()
    return SparseRowGraph(matrix=matrix, k=k)
