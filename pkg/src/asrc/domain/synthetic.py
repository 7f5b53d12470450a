from typing import Tuple

import numpy as np

from asrc.domain.numerics import SeededRng


def gen_two_moons(
    n: int, noise: float = 0.05, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Two interleaving half circles; labels 0 (upper) and 1 (lower)."""
    if n < 4:
        raise ValueError("need at least four samples")
    n_upper = n // 2
    n_lower = n - n_upper
    upper = np.linspace(0.0, np.pi, n_upper)
    lower = np.linspace(0.0, np.pi, n_lower)
    X = np.vstack(
        [
            np.c_[np.cos(upper), np.sin(upper)],
            np.c_[1.0 - np.cos(lower), 0.5 - np.sin(lower)],
        ]
    )
    labels = np.r_[np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)]
    if noise > 0:
        X = X + SeededRng(seed).spawn("moons").normal(0.0, noise, X.shape)
    return X, labels


def blob_centers(c: int, separation: float, dim: int = 2) -> np.ndarray:
    """Centers on a circle with neighbouring centers `separation` apart."""
    centers = np.zeros((c, dim))
    if c > 1 and separation > 0:
        radius = separation / (2.0 * np.sin(np.pi / c))
        angle = 2.0 * np.pi * np.arange(c) / c
        centers[:, 0] = radius * np.cos(angle)
        centers[:, 1] = radius * np.sin(angle)
    return centers


def gen_blobs(
    n: int,
    c: int = 4,
    separation: float = 10.0,
    spread: float = 1.0,
    seed: int = 0,
    dim: int = 2,
) -> Tuple[np.ndarray, np.ndarray]:
    if n < 4:
        raise ValueError("need at least four samples")
    if not 1 <= c <= n or dim < 2:
        raise ValueError("need 1 <= c <= n and dim >= 2")
    labels = np.arange(n, dtype=np.int64) % c
    noise = SeededRng(seed).spawn("blobs").normal(0.0, spread, (n, dim))
    return blob_centers(c, separation, dim)[labels] + noise, labels
