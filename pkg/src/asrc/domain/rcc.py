import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from asrc.domain.graph import EdgeList
from asrc.domain.model import ClusterAssignment
from asrc.domain.numerics import (
    DataMatrix,
    EmptyGraph,
    NonConvergence,
    SeededRng,
    SparseSymOperator,
    cg_solve,
    matrix_norm,
    pairwise_dist,
    spectral_norm,
)

logger = logging.getLogger(__name__)

ALPHA_FACTOR = 3.0
MIN_DELTA = 1e-9
LINK_SLACK = 1.05


class DisconnectedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RccConfig:
    max_sweeps: int = 100
    interval: int = 4
    delta: float = 0.0
    tol: float = 1e-5
    cg_tol: float = 1e-8
    robust: bool = True

    def __post_init__(self):
        if self.max_sweeps < 1 or self.interval < 1:
            raise ValueError("max_sweeps and interval must be at least 1")
        if self.delta < 0:
            raise ValueError("delta must be non-negative (0 means auto)")


@dataclass
class RccState:
    U: DataMatrix
    l: np.ndarray
    lambda1: float
    alpha: float
    delta: float
    threshold: float
    iteration: int = 0


def _edge_sq_dist(U: np.ndarray, edges: EdgeList) -> np.ndarray:
    diff = U[edges.i] - U[edges.j]
    return np.einsum("ij,ij->i", diff, diff)


def update_l(U: DataMatrix, edges: EdgeList, alpha: float) -> np.ndarray:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return (alpha / (alpha + _edge_sq_dist(np.asarray(U), edges))) ** 2


def assemble_system(
    n: int, edges: EdgeList, l: np.ndarray, lambda1: float
) -> SparseSymOperator:
    return SparseSymOperator.shifted_laplacian(
        n, edges.i, edges.j, lambda1 * edges.weights * l, shift=1.0
    )


def assemble_and_solve_u(
    Z: DataMatrix,
    edges: EdgeList,
    l: np.ndarray,
    lambda1: float,
    tol: float = 1e-8,
) -> DataMatrix:
    if lambda1 < 0 or np.any(edges.weights < 0):
        raise ValueError("lambda1 and edge weights must be non-negative")
    Z = np.asarray(Z, dtype=float)
    return cg_solve(assemble_system(Z.shape[0], edges, l, lambda1), Z, tol)


def update_lambda1(
    Z: DataMatrix,
    edges: EdgeList,
    l: np.ndarray,
    rng: Optional[SeededRng] = None,
    tol: float = 1e-6,
) -> float:
    """Balance the data term against the weighted graph operator."""
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    strength = edges.weights * l
    if len(edges) == 0 or not np.any(strength > 0):
        raise EmptyGraph("no edge carries positive weight")
    laplacian = SparseSymOperator.shifted_laplacian(
        n, edges.i, edges.j, strength, shift=0.0
    ).to_csr()
    rng = rng or SeededRng(0)
    try:
        data_norm = matrix_norm(Z, tol=tol, rng=rng.spawn("data-norm"))
    except NonConvergence as e:
        logger.warning(f"data norm estimate unsettled: {e}")
        data_norm = e.estimate
    try:
        graph_norm = spectral_norm(
            lambda v: laplacian @ v, n, tol=tol, rng=rng.spawn("graph-norm")
        )
    except NonConvergence as e:
        logger.warning(f"graph norm estimate unsettled: {e}")
        graph_norm = e.estimate
    if not graph_norm:
        raise EmptyGraph("graph operator has zero norm")
    return data_norm / graph_norm


def anneal_alpha(alpha: float, delta: float) -> float:
    return max(alpha / 2.0, delta / 2.0)


def rcc_objective(
    U: DataMatrix,
    l: np.ndarray,
    Z: DataMatrix,
    edges: EdgeList,
    lambda1: float,
    alpha: float,
) -> float:
    U = np.asarray(U, dtype=float)
    data = 0.5 * float(np.sum((U - np.asarray(Z)) ** 2))
    penalty = l * _edge_sq_dist(U, edges) + alpha * (np.sqrt(l) - 1.0) ** 2
    return data + 0.5 * lambda1 * float(np.sum(edges.weights * penalty))


def auto_delta(Z: DataMatrix) -> float:
    """Mean distance from each sample to its nearest neighbour."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] < 2:
        return MIN_DELTA
    distances, _ = cKDTree(Z).query(Z, k=2)
    return max(float(distances[:, 1].mean()), MIN_DELTA)


def connectivity_radius(U: DataMatrix) -> float:
    """Largest distance from a representative to its nearest other one.

    Any threshold above it leaves no representative on its own.
    """
    U = np.asarray(U, dtype=float)
    if U.shape[0] < 2:
        return 0.0
    distances, _ = cKDTree(U).query(U, k=2)
    return float(distances[:, 1].max())


def extract_clusters(
    U: DataMatrix, delta: float, edges: Optional[EdgeList] = None
) -> ClusterAssignment:
    """Connected components of the pairs closer than delta.

    Graph edges are always tested; a kd-tree radius search adds the
    off-graph pairs, so the partition does not depend on the edge set.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    U = np.asarray(U, dtype=float)
    n = U.shape[0]
    pairs = cKDTree(U).query_pairs(r=delta, output_type="ndarray")
    if edges is not None and len(edges):
        pairs = np.vstack([pairs.reshape(-1, 2), np.c_[edges.i, edges.j]])
    pairs = pairs.reshape(-1, 2)
    diff = U[pairs[:, 0]] - U[pairs[:, 1]]
    close = np.sqrt(np.einsum("ij,ij->i", diff, diff)) < delta
    pairs = pairs[close]
    linked = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, labels = connected_components(linked, directed=False)
    return ClusterAssignment.from_labels(labels)


def mutual_knn_graph(
    X: DataMatrix, k: int, metric: str = "euclidean", connect: bool = False
) -> EdgeList:
    """Reciprocal k-nearest-neighbour edges with Gaussian weights.

    With ``connect`` the edges of a minimum spanning tree are added, so
    every node keeps at least one neighbour.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    if metric == "euclidean":
        D = pairwise_dist(X)
    elif metric == "cosine":
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        unit = X / np.where(norms > 0, norms, 1.0)[:, None]
        D = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
        np.fill_diagonal(D, 0.0)
    else:
        raise ValueError(f"unknown metric {metric!r}")

    ranked = D.copy()
    np.fill_diagonal(ranked, np.inf)
    neighbours = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    is_neighbour = np.zeros((n, n), dtype=bool)
    is_neighbour[np.repeat(np.arange(n), k), neighbours.ravel()] = True
    linked = is_neighbour & is_neighbour.T
    if connect:
        # csgraph reads zeros as missing edges
        lengths = np.where(D > 0, D, MIN_DELTA)
        np.fill_diagonal(lengths, 0.0)
        tree = minimum_spanning_tree(lengths).tocoo()
        linked[tree.row, tree.col] = True
        linked[tree.col, tree.row] = True
    i, j = np.nonzero(np.triu(linked, k=1))

    kth = np.take_along_axis(D, neighbours[:, -1:], axis=1).ravel()
    sigma = float(kth.mean())
    if sigma <= 0:
        sigma = 1.0
    weights = np.exp(-(D[i, j] ** 2) / (2.0 * sigma**2))

    isolated = np.setdiff1d(np.arange(n), np.concatenate([i, j]))
    if isolated.size:
        warnings.warn(
            f"{isolated.size} nodes have no mutual neighbour: "
            f"{isolated[:10].tolist()}",
            DisconnectedWarning,
        )
    return EdgeList(i.astype(np.int64), j.astype(np.int64), weights)


def max_relative_change(U_old: np.ndarray, U_new: np.ndarray) -> float:
    step = np.sqrt(np.einsum("ij,ij->i", U_new - U_old, U_new - U_old))
    size = np.sqrt(np.einsum("ij,ij->i", U_new, U_new))
    return float(np.max(step / (1.0 + size))) if step.size else 0.0


def rcc_run(
    Z: DataMatrix,
    edges: EdgeList,
    cfg: Optional[RccConfig] = None,
    rng: Optional[SeededRng] = None,
) -> Tuple[ClusterAssignment, RccState]:
    cfg = cfg or RccConfig()
    rng = rng or SeededRng(0)
    if len(edges) == 0:
        raise EmptyGraph("robust continuous clustering needs edges")
    Z = np.asarray(Z, dtype=float)
    U = Z.copy()
    l = np.ones(len(edges))
    delta = cfg.delta if cfg.delta > 0 else auto_delta(Z)
    alpha = ALPHA_FACTOR * max(float(_edge_sq_dist(Z, edges).max()), MIN_DELTA)
    lambda1 = update_lambda1(Z, edges, l, rng)
    logger.debug(
        f"rcc start: {len(edges)} edges, lambda1={lambda1:.4g}, "
        f"alpha={alpha:.4g}, delta={delta:.4g}"
    )

    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        if cfg.robust:
            l = update_l(U, edges, alpha)
        U_next = assemble_and_solve_u(Z, edges, l, lambda1, cfg.cg_tol)
        change = max_relative_change(U, U_next)
        U = U_next
        if cfg.robust and sweep % cfg.interval == 0:
            lambda1 = update_lambda1(Z, edges, l, rng)
            alpha = anneal_alpha(alpha, delta)
            logger.debug(
                f"rcc sweep {sweep}: lambda1={lambda1:.4g}, alpha={alpha:.4g}"
            )
        if change < cfg.tol:
            break

    if cfg.delta > 0:
        threshold = cfg.delta
    else:
        threshold = max(delta, LINK_SLACK * connectivity_radius(U))
    state = RccState(
        U=U,
        l=l,
        lambda1=lambda1,
        alpha=alpha,
        delta=delta,
        threshold=threshold,
        iteration=sweep,
    )
    assignment = extract_clusters(U, threshold, edges)
    logger.debug(
        f"rcc stopped after {sweep} sweeps: {assignment.n_clusters} clusters "
        f"at threshold {threshold:.4g}"
    )
    return assignment, state
