"""External agreement scores and the seeded k-means++ baseline."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import gammaln
from sklearn.cluster import KMeans

from asrc.domain.model import ClusterAssignment
from asrc.domain.numerics import DataMatrix, LengthMismatch, SeededRng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    n: int


def _labels(a) -> np.ndarray:
    if isinstance(a, ClusterAssignment):
        return a.labels
    return np.asarray(a).ravel()


def contingency(a, b) -> ContingencyTable:
    a, b = _labels(a), _labels(b)
    if a.size != b.size:
        raise LengthMismatch(f"partitions of {a.size} and {b.size} samples")
    _, a_index = np.unique(a, return_inverse=True)
    _, b_index = np.unique(b, return_inverse=True)
    a_index, b_index = a_index.ravel(), b_index.ravel()
    shape = (int(a_index.max(initial=-1)) + 1, int(b_index.max(initial=-1)) + 1)
    counts = sparse.coo_matrix(
        (np.ones(a.size, dtype=np.int64), (a_index, b_index)),
        shape=shape,
        dtype=np.int64,
    ).toarray()
    return ContingencyTable(
        counts=counts,
        rows=counts.sum(axis=1),
        cols=counts.sum(axis=0),
        n=int(a.size),
    )


def _same_partition(a, b) -> bool:
    return ClusterAssignment.from_labels(_labels(a)) == (
        ClusterAssignment.from_labels(_labels(b))
    )


def _pairs(x: np.ndarray) -> float:
    x = x.astype(float)
    return float(np.sum(x * (x - 1.0)) / 2.0)


def adjusted_rand_index(a, b) -> float:
    table = contingency(a, b)
    if table.n < 2:
        raise ValueError("the rand index needs at least two samples")
    index = _pairs(table.counts)
    row_pairs, col_pairs = _pairs(table.rows), _pairs(table.cols)
    expected = row_pairs * col_pairs / (table.n * (table.n - 1) / 2.0)
    maximum = 0.5 * (row_pairs + col_pairs)
    if maximum == expected:
        # both partitions are a single cluster or both are all singletons
        return 1.0 if _same_partition(a, b) else 0.0
    return float((index - expected) / (maximum - expected))


def _entropy(marginal: np.ndarray, n: int) -> float:
    p = marginal[marginal > 0] / n
    return float(-np.sum(p * np.log(p)))


def mutual_info(table: ContingencyTable) -> float:
    rows, cols = np.nonzero(table.counts)
    nij = table.counts[rows, cols].astype(float)
    n = table.n
    outer = table.rows[rows].astype(float) * table.cols[cols]
    return float(np.sum(nij / n * np.log(n * nij / outer)))


def expected_mutual_info(table: ContingencyTable) -> float:
    """Exact E[MI] under the hypergeometric permutation model."""
    n = table.n
    a = table.rows.astype(np.int64)
    b = table.cols.astype(np.int64)
    # log_fact[m] = log(m!)
    log_fact = gammaln(np.arange(n + 2, dtype=float) + 1)
    total = 0.0
    for ai in a:
        for bj in b:
            low = max(1, ai + bj - n)
            high = min(ai, bj)
            if high < low:
                continue
            nij = np.arange(low, high + 1)
            term = nij / n * (np.log(n * nij) - np.log(ai * bj))
            log_prob = (
                log_fact[ai]
                + log_fact[bj]
                + log_fact[n - ai]
                + log_fact[n - bj]
                - log_fact[n]
                - log_fact[nij]
                - log_fact[ai - nij]
                - log_fact[bj - nij]
                - log_fact[n - ai - bj + nij]
            )
            total += float(np.sum(term * np.exp(log_prob)))
    return total


def adjusted_mutual_info(a, b) -> float:
    table = contingency(a, b)
    if table.n == 0:
        raise ValueError("empty partitions")
    mi = mutual_info(table)
    emi = expected_mutual_info(table)
    h_a = _entropy(table.rows, table.n)
    h_b = _entropy(table.cols, table.n)
    denominator = 0.5 * (h_a + h_b) - emi
    if abs(denominator) < 1e-15:
        return 1.0 if _same_partition(a, b) else 0.0
    return float((mi - emi) / denominator)


@dataclass(frozen=True)
class KMeansFit:
    assignment: ClusterAssignment
    centers: np.ndarray
    inertia: float
    n_iter: int


def kmeans_fit(
    Z: DataMatrix,
    c: int,
    rng: Optional[SeededRng] = None,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> KMeansFit:
    """Best of ``n_init`` k-means++ starts; centers follow the relabelled order."""
    Z = np.asarray(Z, dtype=float)
    if not 1 <= c <= Z.shape[0]:
        raise ValueError(f"c={c} outside [1, {Z.shape[0]}]")
    rng = rng or SeededRng(0)
    km = KMeans(
        n_clusters=c,
        init="k-means++",
        n_init=n_init,
        max_iter=max_iter,
        tol=tol,
        random_state=rng.seed % 2**32,
    ).fit(Z)
    raw = km.labels_
    _, first = np.unique(raw, return_index=True)
    order = raw[np.sort(first)]
    logger.debug(
        f"kmeans inertia {km.inertia_:.6g} after {km.n_iter_} iterations, "
        f"best of {n_init} starts"
    )
    return KMeansFit(
        assignment=ClusterAssignment.from_labels(raw),
        centers=km.cluster_centers_[order],
        inertia=float(km.inertia_),
        n_iter=int(km.n_iter_),
    )


def kmeans_pp(
    Z: DataMatrix, c: int, rng: Optional[SeededRng] = None, n_init: int = 10
) -> ClusterAssignment:
    return kmeans_fit(Z, c, rng, n_init).assignment
