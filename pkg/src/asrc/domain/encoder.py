"""Two-layer graph-convolutional auto-encoder with analytic gradients.

Forward pass: Z = A relu(A X W1) W2 with A the normalized adjacency.
The decoder is a row softmax over negative Euclidean embedding distances,
matched to the learned graph by KL divergence.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax

from asrc.domain import contrastive
from asrc.domain.graph import SparseRowGraph, SymGraph
from asrc.domain.numerics import (
    DataMatrix,
    NonFiniteLoss,
    SeededRng,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

DIST_EPS = 1e-12


def parse_struct(struct: str, d: int) -> Tuple[int, int, int]:
    """'d-256-64' -> (d, 256, 64); the leading 'd' is the input width."""
    parts = struct.strip().split("-")
    if len(parts) != 3:
        raise ValueError(f"struct must have three layers, got {struct!r}")
    head, hidden, out = parts
    if head not in ("d", str(d)):
        raise ValueError(f"struct input width {head} does not match d={d}")
    return d, int(hidden), int(out)


@dataclass
class EncoderParams:
    theta1: np.ndarray
    theta2: np.ndarray

    @classmethod
    def initialize(
        cls, d: int, h1: int, h2: int, rng: SeededRng
    ) -> "EncoderParams":
        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, (fan_in, fan_out))

        return cls(theta1=glorot(d, h1), theta2=glorot(h1, h2))

    @property
    def architecture(self) -> str:
        d, h1 = self.theta1.shape
        return f"{d}-{h1}-{self.theta2.shape[1]}"

    def arrays(self) -> List[np.ndarray]:
        return [self.theta1, self.theta2]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.theta1.copy(), self.theta2.copy())


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first: List[np.ndarray] = field(default_factory=list)
    second: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls, params: EncoderParams, learning_rate: float = 1e-3
    ) -> "OptimizerState":
        return cls(
            learning_rate=learning_rate,
            first=[np.zeros_like(a) for a in params.arrays()],
            second=[np.zeros_like(a) for a in params.arrays()],
        )

    def to_dict(self) -> Dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "step": self.step,
            "first": [a.tolist() for a in self.first],
            "second": [a.tolist() for a in self.second],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "OptimizerState":
        return cls(
            learning_rate=data["learning_rate"],
            beta1=data["beta1"],
            beta2=data["beta2"],
            epsilon=data["epsilon"],
            step=data["step"],
            first=[np.array(a, dtype=float) for a in data["first"]],
            second=[np.array(a, dtype=float) for a in data["second"]],
        )


@dataclass(frozen=True)
class EmbeddingViews:
    Z1: DataMatrix
    Z2: DataMatrix
    Z: DataMatrix


@dataclass(frozen=True)
class _ForwardCache:
    AX: np.ndarray
    pre: np.ndarray
    AH: np.ndarray


def _check_shapes(X: np.ndarray, graph: SymGraph, params: EncoderParams):
    if X.shape[0] != graph.n:
        raise ShapeMismatch(f"{X.shape[0]} samples on a {graph.n}-node graph")
    if X.shape[1] != params.theta1.shape[0]:
        raise ShapeMismatch(
            f"features {X.shape[1]} vs encoder input {params.theta1.shape[0]}"
        )
    if params.theta1.shape[1] != params.theta2.shape[0]:
        raise ShapeMismatch("hidden widths of the two layers disagree")


def _forward(
    X: DataMatrix, graph: SymGraph, params: EncoderParams
) -> Tuple[np.ndarray, _ForwardCache]:
    X = np.asarray(X, dtype=float)
    _check_shapes(X, graph, params)
    A = graph.normalized
    AX = np.asarray(A @ X)
    pre = AX @ params.theta1
    AH = np.asarray(A @ np.maximum(pre, 0.0))
    return AH @ params.theta2, _ForwardCache(AX, pre, AH)


def _backward(
    graph: SymGraph,
    params: EncoderParams,
    cache: _ForwardCache,
    grad_Z: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    grad_theta2 = cache.AH.T @ grad_Z
    grad_hidden = np.asarray(graph.normalized @ (grad_Z @ params.theta2.T))
    grad_pre = grad_hidden * (cache.pre > 0)
    return cache.AX.T @ grad_pre, grad_theta2


def encode(X: DataMatrix, graph: SymGraph, params: EncoderParams) -> DataMatrix:
    return _forward(X, graph, params)[0]


def encode_views(
    X1: DataMatrix, X2: DataMatrix, graph: SymGraph, params: EncoderParams
) -> EmbeddingViews:
    Z1 = encode(X1, graph, params)
    Z2 = encode(X2, graph, params)
    return EmbeddingViews(Z1, Z2, contrastive.fuse_views(Z1, Z2))


def _smoothed_distances(Z: np.ndarray) -> np.ndarray:
    # self distances are identically zero and carry no gradient
    diff_sq = np.einsum("ij,ij->i", Z, Z)
    sq = diff_sq[:, None] + diff_sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(sq, 0.0, out=sq)
    D = np.sqrt(sq + DIST_EPS)
    np.fill_diagonal(D, 0.0)
    return D


def decode_distribution(Z: DataMatrix) -> np.ndarray:
    D = _smoothed_distances(np.asarray(Z, dtype=float))
    return np.exp(log_softmax(-D, axis=1))


def _gae_terms(
    P: SparseRowGraph, Z: np.ndarray, lambda2: float
) -> Tuple[float, float, np.ndarray, np.ndarray]:
    D = _smoothed_distances(Z)
    log_phat = log_softmax(-D, axis=1)
    coo = P.matrix.tocoo()
    p = coo.data
    support = p > 0
    rows, cols, p = coo.row[support], coo.col[support], p[support]
    kl = float(np.sum(p * (np.log(p) - log_phat[rows, cols])))
    distance = float(0.5 * lambda2 * np.sum(p * D[rows, cols]))
    return kl, distance, D, log_phat


def gae_loss(P: SparseRowGraph, Z: DataMatrix, lambda2: float) -> float:
    kl, distance, _, _ = _gae_terms(P, np.asarray(Z, dtype=float), lambda2)
    return kl + distance


def kl_term(P: SparseRowGraph, Z: DataMatrix) -> float:
    return _gae_terms(P, np.asarray(Z, dtype=float), 0.0)[0]


def _distance_backward(
    Z: np.ndarray, D: np.ndarray, grad_D: np.ndarray
) -> np.ndarray:
    np.fill_diagonal(grad_D, 0.0)
    safe = D.copy()
    np.fill_diagonal(safe, 1.0)
    W = (grad_D + grad_D.T) / safe
    return W.sum(axis=1)[:, None] * Z - W @ Z


def gae_loss_with_grad(
    P: SparseRowGraph, Z: DataMatrix, lambda2: float
) -> Tuple[float, np.ndarray]:
    Z = np.asarray(Z, dtype=float)
    kl, distance, D, log_phat = _gae_terms(P, Z, lambda2)
    dense_P = P.to_dense()
    # rows of P sum to one, so d(-sum p log phat)/dD = P - Phat
    grad_D = dense_P * (1.0 + 0.5 * lambda2) - np.exp(log_phat)
    return kl + distance, _distance_backward(Z, D, grad_D)


def asrc_loss_and_grad(
    X1: DataMatrix,
    X2: DataMatrix,
    graph: SymGraph,
    params: EncoderParams,
    P: SparseRowGraph,
    lambda2: float,
    beta: float,
    clusters: Optional[np.ndarray] = None,
    tau: float = 1.0,
) -> Tuple[float, EncoderParams]:
    """Combined auto-encoder and contrastive objective with its gradient."""
    Z1, cache1 = _forward(X1, graph, params)
    Z2, cache2 = _forward(X2, graph, params)
    Z = contrastive.fuse_views(Z1, Z2)

    loss, grad_Z = gae_loss_with_grad(P, Z, lambda2)
    grad_Z1 = 0.5 * grad_Z
    grad_Z2 = 0.5 * grad_Z
    if beta != 0:
        n = Z.shape[0]
        mask = (
            contrastive.NegativeMask(np.asarray(clusters))
            if clusters is not None
            else contrastive.NegativeMask.singletons(n)
        )
        ssl, grad_ssl1, grad_ssl2 = contrastive.info_nce_debiased_with_grad(
            Z1, Z2, mask, tau
        )
        loss += beta * ssl
        grad_Z1 = grad_Z1 + beta * grad_ssl1
        grad_Z2 = grad_Z2 + beta * grad_ssl2

    if not np.isfinite(loss):
        raise NonFiniteLoss(f"training loss became {loss}")
    g1a, g2a = _backward(graph, params, cache1, grad_Z1)
    g1b, g2b = _backward(graph, params, cache2, grad_Z2)
    return loss, EncoderParams(g1a + g1b, g2a + g2b)


def optimizer_step(
    params: EncoderParams, grads: EncoderParams, state: OptimizerState
) -> Tuple[EncoderParams, OptimizerState]:
    """Adaptive-moment update with bias correction."""
    if not state.first:
        state = OptimizerState.for_params(params, state.learning_rate)
    step = state.step + 1
    first, second, updated = [], [], []
    for theta, grad, m, v in zip(
        params.arrays(), grads.arrays(), state.first, state.second
    ):
        if theta.shape != grad.shape:
            raise ShapeMismatch(f"gradient {grad.shape} vs {theta.shape}")
        m = state.beta1 * m + (1 - state.beta1) * grad
        v = state.beta2 * v + (1 - state.beta2) * grad**2
        m_hat = m / (1 - state.beta1**step)
        v_hat = v / (1 - state.beta2**step)
        updated.append(
            theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        )
        first.append(m)
        second.append(v)
    new_state = OptimizerState(
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step=step,
        first=first,
        second=second,
    )
    return EncoderParams(*updated), new_state


@dataclass
class TrainingPhase:
    params: EncoderParams
    state: OptimizerState
    losses: List[float]


def train(
    X1: DataMatrix,
    X2: DataMatrix,
    graph: SymGraph,
    P: SparseRowGraph,
    params: EncoderParams,
    state: OptimizerState,
    lambda2: float,
    beta: float,
    clusters: Optional[np.ndarray] = None,
    tau: float = 1.0,
    max_steps: int = 100,
    rel_tol: float = 1e-4,
    patience: int = 5,
) -> TrainingPhase:
    """Gradient steps on a fixed graph until the loss settles."""
    losses: List[float] = []
    calm = 0
    for _ in range(max_steps):
        loss, grads = asrc_loss_and_grad(
            X1, X2, graph, params, P, lambda2, beta, clusters, tau
        )
        params, state = optimizer_step(params, grads, state)
        if losses:
            change = abs(losses[-1] - loss) / max(abs(losses[-1]), 1e-12)
            calm = calm + 1 if change < rel_tol else 0
        losses.append(loss)
        if calm >= patience:
            break
    logger.debug(
        f"trained {len(losses)} steps on k={P.k}, "
        f"loss {losses[0]:.6g} -> {losses[-1]:.6g}"
    )
    return TrainingPhase(params=params, state=state, losses=losses)
