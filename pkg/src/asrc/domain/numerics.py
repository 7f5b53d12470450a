import hashlib
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

DataMatrix = np.ndarray
MatrixAction = Callable[[np.ndarray], np.ndarray]


class NumericalError(Exception):
    pass


class NonConvergence(NumericalError):
    def __init__(self, message: str, estimate: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate


class NotPositiveDefinite(NumericalError):
    pass


class ShapeMismatch(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class EmptyGraph(NumericalError):
    pass


class IsolatedNode(NumericalError):
    pass


class LengthMismatch(NumericalError):
    pass


class RankDeficientWarning(UserWarning):
    pass


class SeededRng:
    """PCG64 stream with named, independent sub-streams.

    A sub-stream is keyed by the parent seed and a sha256 digest of its
    name, so the order in which modules ask for streams does not matter.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"<SeededRng {self.seed}>"

    def spawn(self, name: str) -> "SeededRng":
        key = int.from_bytes(
            hashlib.sha256(name.encode("utf-8")).digest()[:8], "little"
        )
        sequence = np.random.SeedSequence([self.seed, key])
        [child] = sequence.generate_state(1, dtype=np.uint64)
        return SeededRng(int(child))

    def normal(self, loc: float, scale: float, size) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def choice(self, n: int, p: Optional[np.ndarray] = None) -> int:
        return int(self.generator.choice(n, p=p))


@dataclass(frozen=True)
class SparseSymOperator:
    """Symmetric sparse operator stored by its upper triangle (i <= j)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.rows > self.cols):
            raise ValueError("entries must satisfy i <= j")

    @classmethod
    def identity(cls, n: int) -> "SparseSymOperator":
        index = np.arange(n)
        return cls(n, index, index, np.ones(n))

    @classmethod
    def shifted_laplacian(
        cls,
        n: int,
        i: np.ndarray,
        j: np.ndarray,
        weights: np.ndarray,
        shift: float = 1.0,
    ) -> "SparseSymOperator":
        """shift * I plus the Laplacian of the weighted edge list."""
        i, j = np.minimum(i, j), np.maximum(i, j)
        diagonal = np.full(n, float(shift))
        np.add.at(diagonal, i, weights)
        np.add.at(diagonal, j, weights)
        index = np.arange(n)
        return cls(
            n,
            np.concatenate([index, i]),
            np.concatenate([index, j]),
            np.concatenate([diagonal, -np.asarray(weights, dtype=float)]),
        )

    def to_csr(self) -> sparse.csr_matrix:
        off = self.rows != self.cols
        rows = np.concatenate([self.rows, self.cols[off]])
        cols = np.concatenate([self.cols, self.rows[off]])
        values = np.concatenate([self.weights, self.weights[off]])
        return sparse.coo_matrix(
            (values, (rows, cols)), shape=(self.n, self.n)
        ).tocsr()

    def diagonal(self) -> np.ndarray:
        on = self.rows == self.cols
        diagonal = np.zeros(self.n)
        np.add.at(diagonal, self.rows[on], self.weights[on])
        return diagonal


def cg_solve(
    op: SparseSymOperator,
    rhs: DataMatrix,
    tol: float = 1e-8,
    max_iter: Optional[int] = None,
) -> DataMatrix:
    """Jacobi-preconditioned conjugate gradients, all columns at once."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    B = np.asarray(rhs, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.shape[0] != op.n or B.shape[1] < 1:
        raise ShapeMismatch(f"rhs shape {B.shape} against operator {op.n}")
    A = op.to_csr()
    diagonal = A.diagonal()
    if np.any(diagonal <= 0):
        raise NotPositiveDefinite("non-positive diagonal entry")
    max_iter = max_iter if max_iter is not None else 10 * op.n + 100

    b_norm = np.linalg.norm(B)
    U = np.zeros_like(B)
    if b_norm == 0:
        return U[:, 0] if vector else U

    R = B.copy()
    Zr = R / diagonal[:, None]
    D = Zr.copy()
    rz = np.sum(R * Zr, axis=0)
    for iteration in range(max_iter):
        if np.linalg.norm(R) <= tol * b_norm:
            true_residual = B - A @ U
            if np.linalg.norm(true_residual) <= tol * b_norm:
                logger.debug(f"cg converged after {iteration} iterations")
                return U[:, 0] if vector else U
            R = true_residual
            Zr = R / diagonal[:, None]
            D = Zr.copy()
            rz = np.sum(R * Zr, axis=0)
        AD = A @ D
        curvature = np.sum(D * AD, axis=0)
        active = rz > 0
        scale = np.sum(D * D, axis=0) * np.abs(diagonal).max()
        if np.any(curvature[active] <= -1e-14 * scale[active]):
            raise NotPositiveDefinite("negative curvature direction in cg")
        step = np.zeros_like(rz)
        safe = active & (curvature > 0)
        step[safe] = rz[safe] / curvature[safe]
        U += step * D
        R -= step * AD
        Zr = R / diagonal[:, None]
        rz_next = np.sum(R * Zr, axis=0)
        beta = np.zeros_like(rz)
        beta[safe] = rz_next[safe] / rz[safe]
        D = Zr + beta * D
        rz = rz_next

    residual = np.linalg.norm(B - A @ U) / b_norm
    if residual <= tol:
        return U[:, 0] if vector else U
    raise NonConvergence(
        f"cg stopped after {max_iter} iterations at residual {residual:.3e}",
        estimate=residual,
    )


def spectral_norm(
    op_apply: MatrixAction,
    n: int,
    tol: float = 1e-10,
    rng: Optional[SeededRng] = None,
    max_iter: int = 1000,
    gram: bool = False,
) -> float:
    """Largest singular value by power iteration.

    With ``gram=True`` the action is v -> X^T X v and the square root of
    its dominant eigenvalue is returned.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = rng or SeededRng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for iteration in range(max_iter):
        w = np.asarray(op_apply(v), dtype=float)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        previous, estimate = estimate, norm
        v = w / norm
        if iteration > 0 and abs(estimate - previous) <= tol * estimate:
            break
    else:
        value = np.sqrt(estimate) if gram else estimate
        raise NonConvergence(
            f"power iteration did not settle in {max_iter} steps",
            estimate=float(value),
        )
    return float(np.sqrt(estimate)) if gram else estimate


def matrix_norm(X: DataMatrix, tol: float = 1e-10, rng=None, **kwargs) -> float:
    X = np.asarray(X, dtype=float)
    return spectral_norm(
        lambda v: X.T @ (X @ v), X.shape[1], tol, rng, gram=True, **kwargs
    )


@dataclass(frozen=True)
class PcaFit:
    scores: DataMatrix
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray


def pca_fit(
    X: DataMatrix,
    r: int,
    rng: Optional[SeededRng] = None,
    oversample: int = 10,
    n_iter: int = 7,
) -> PcaFit:
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= r <= min(n, d):
        raise ValueError(f"r={r} outside [1, {min(n, d)}]")
    rng = rng or SeededRng(0)
    mean = X.mean(axis=0)
    centered = X - mean
    width = min(r + oversample, n, d)

    Q, _ = np.linalg.qr(centered @ rng.standard_normal((d, width)))
    for _ in range(n_iter):
        Q, _ = np.linalg.qr(centered.T @ Q)
        Q, _ = np.linalg.qr(centered @ Q)
    _, singular, vt = np.linalg.svd(Q.T @ centered, full_matrices=False)

    scale = singular[0] if singular.size else 0.0
    nonzero = int(np.sum(singular[:r] > 1e-12 * max(scale, 1e-300)))
    if nonzero < r:
        warnings.warn(
            f"only {nonzero} of {r} principal directions carry variance",
            RankDeficientWarning,
        )
    components = vt[:r].T
    return PcaFit(
        scores=centered @ components,
        components=components,
        mean=mean,
        explained_variance=singular[:r] ** 2 / max(n - 1, 1),
    )


def pca_reduce(
    X: DataMatrix, r: int, rng: Optional[SeededRng] = None
) -> DataMatrix:
    return pca_fit(X, r, rng).scores


def pairwise_dist(Z: DataMatrix, squared: bool = False) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    norms = np.einsum("ij,ij->i", Z, Z)
    D = norms[:, None] + norms[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(D, 0.0, out=D)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D if squared else np.sqrt(D)


def normalize_minmax(X: DataMatrix) -> DataMatrix:
    """Per-column affine map onto [0, 1]; constant columns become 0."""
    X = check_finite(X, "data")
    low = X.min(axis=0)
    span = X.max(axis=0) - low
    out = np.zeros_like(X)
    varying = span > 0
    out[:, varying] = (X[:, varying] - low[varying]) / span[varying]
    return out


def check_finite(X: DataMatrix, name: str = "matrix") -> DataMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"{name} must be two-dimensional, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericalError(f"{name} contains NaN or Inf")
    return X
