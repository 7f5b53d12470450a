import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from asrc.domain.numerics import DataMatrix, SeededRng, ShapeMismatch

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass(frozen=True)
class AugmentConfig:
    noise_std: float = 0.01
    rng: Optional[SeededRng] = None

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class NegativeMask:
    """Per-anchor negatives: every sample outside the anchor's cluster."""

    labels: np.ndarray

    @classmethod
    def singletons(cls, n: int) -> "NegativeMask":
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    def matrix(self) -> np.ndarray:
        return self.labels[:, None] != self.labels[None, :]

    def negatives(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels != self.labels[i])


def augment_gaussian(X: DataMatrix, cfg: AugmentConfig) -> DataMatrix:
    X = np.asarray(X, dtype=float)
    if cfg.noise_std == 0:
        return X.copy()
    rng = cfg.rng or SeededRng(0)
    return X + rng.normal(0.0, cfg.noise_std, X.shape)


def fuse_views(Z1: DataMatrix, Z2: DataMatrix) -> DataMatrix:
    if np.shape(Z1) != np.shape(Z2):
        raise ShapeMismatch(f"views differ: {np.shape(Z1)} vs {np.shape(Z2)}")
    return 0.5 * (np.asarray(Z1) + np.asarray(Z2))


def _unit_rows(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    radius = np.sqrt(np.einsum("ij,ij->i", Z, Z) + NORM_EPS)
    return Z / radius[:, None], radius


def _unit_rows_backward(
    Z: np.ndarray, radius: np.ndarray, grad_unit: np.ndarray
) -> np.ndarray:
    projection = np.einsum("ij,ij->i", Z, grad_unit)
    return grad_unit / radius[:, None] - Z * (projection / radius**3)[:, None]


def info_nce_debiased_with_grad(
    Z1: DataMatrix, Z2: DataMatrix, mask: NegativeMask, tau: float = 1.0
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Cluster-guided InfoNCE over both views and its gradients."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    if Z1.shape != Z2.shape:
        raise ShapeMismatch(f"views differ: {Z1.shape} vs {Z2.shape}")
    n = Z1.shape[0]
    if mask.n != n:
        raise ShapeMismatch(f"mask covers {mask.n} samples, views have {n}")
    M = mask.matrix().astype(float)

    U1, r1 = _unit_rows(Z1)
    U2, r2 = _unit_rows(Z2)
    S11, S12, S22 = U1 @ U1.T, U1 @ U2.T, U2 @ U2.T

    # logits shifted by 1/tau, the largest attainable cosine
    E11 = np.exp((S11 - 1.0) / tau) * M
    E12 = np.exp((S12 - 1.0) / tau)
    E22 = np.exp((S22 - 1.0) / tau) * M
    positive = np.diag(E12).copy()
    cross12 = E12 * M
    cross21 = E12.T * M

    den1 = positive + E11.sum(axis=1) + cross12.sum(axis=1)
    den2 = positive + E22.sum(axis=1) + cross21.sum(axis=1)
    loss = float(
        (np.log(den1 / positive).sum() + np.log(den2 / positive).sum())
        / (2 * n)
    )

    scale = 1.0 / (2 * n * tau)
    G11 = E11 / den1[:, None]
    G22 = E22 / den2[:, None]
    G12 = cross12 / den1[:, None]
    G21 = cross21 / den2[:, None]
    np.fill_diagonal(G12, positive / den1 - 1.0)
    np.fill_diagonal(G21, positive / den2 - 1.0)

    dS11 = G11 * scale
    dS22 = G22 * scale
    dS12 = (G12 + G21.T) * scale
    dU1 = (dS11 + dS11.T) @ U1 + dS12 @ U2
    dU2 = (dS22 + dS22.T) @ U2 + dS12.T @ U1
    return (
        loss,
        _unit_rows_backward(Z1, r1, dU1),
        _unit_rows_backward(Z2, r2, dU2),
    )


def info_nce_debiased(
    Z1: DataMatrix, Z2: DataMatrix, mask: NegativeMask, tau: float = 1.0
) -> float:
    return info_nce_debiased_with_grad(Z1, Z2, mask, tau)[0]
