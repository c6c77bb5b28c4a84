"""Bidirectional additive-margin softmax ranking loss over cosine
similarity, with analytic gradients.

For a batch of N aligned pairs with unit-norm embeddings X, Y, the
similarity matrix is S = X Y^T (cosine reduces to the dot product).
Per-row logits in the source-to-target direction are

    z_ij = s * (S_ij - m * [i == j])        (similarity scaling)
    z_ij = s^2 * S_ij - m * [i == j]        (embedding scaling)

and the loss is the mean cross-entropy of the diagonal against each
row, computed with a numerically stable log-sum-exp. The
target-to-source direction applies the same construction to S^T; the
bidirectional loss is their sum.

Embedding scaling models multiplying each normalized embedding by
sqrt-of-scale before the dot product, so the effective multiplier on
cosine is s^2; similarity scaling (the default, s applied to the
margined cosine) is the canonical additive-margin-softmax form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

SOURCE_TO_TARGET = "source_to_target"
TARGET_TO_SOURCE = "target_to_source"

SCALE_SIMILARITY = "similarity"
SCALE_EMBEDDING = "embedding"


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.3
    scale: float = 10.0
    scale_mode: str = SCALE_SIMILARITY

    def __post_init__(self) -> None:
        if not (0.0 <= self.margin < 1.0):
            raise ValueError(f"margin must be in [0, 1), got {self.margin}")
        if not (0.0 < self.scale < float("inf")):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.scale_mode not in (SCALE_SIMILARITY, SCALE_EMBEDDING):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")


def similarity_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix for unit-norm rows: S = X @ Y.T."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape != Y.shape:
        raise ValueError(f"expected matching N x d matrices, got {X.shape} and {Y.shape}")
    return X @ Y.T


def _logits(sim: np.ndarray, config: LossConfig) -> np.ndarray:
    margined = sim - config.margin * np.eye(sim.shape[0])
    if config.scale_mode == SCALE_SIMILARITY:
        return config.scale * margined
    return config.scale**2 * sim - config.margin * np.eye(sim.shape[0])


def _row_terms(z: np.ndarray) -> np.ndarray:
    """Per-row -log softmax of the diagonal, via stable log-sum-exp."""
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - np.diagonal(z)


def ams_loss(sim: np.ndarray, config: LossConfig, direction: str = SOURCE_TO_TARGET) -> float:
    """One-directional additive-margin softmax loss over a similarity matrix."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1] or sim.shape[0] < 1:
        raise ValueError(f"similarity matrix must be square and non-empty, got {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise NumericalError("similarity matrix contains non-finite entries")
    if direction == TARGET_TO_SOURCE:
        sim = sim.T
    elif direction != SOURCE_TO_TARGET:
        raise ValueError(f"unknown direction {direction!r}")
    z = _logits(sim, config)
    return float(np.sum(_row_terms(z)) / sim.shape[0])


def bidirectional_loss(sim: np.ndarray, config: LossConfig) -> float:
    """Sum of the source-to-target and target-to-source losses."""
    return ams_loss(sim, config, SOURCE_TO_TARGET) + ams_loss(sim, config, TARGET_TO_SOURCE)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=1, keepdims=True)


def grad_wrt_similarity(sim: np.ndarray, config: LossConfig) -> np.ndarray:
    """d(bidirectional loss)/dS for a similarity matrix S."""
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    eye = np.eye(n)
    factor = config.scale if config.scale_mode == SCALE_SIMILARITY else config.scale**2
    p = _softmax_rows(_logits(sim, config))
    q = _softmax_rows(_logits(sim.T, config))
    return (factor / n) * (p - eye) + (factor / n) * (q - eye).T


def loss_and_grad_wrt_embeddings(
    X: np.ndarray, Y: np.ndarray, config: LossConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus gradients with respect to the (normalized) embeddings."""
    sim = similarity_matrix(X, Y)
    value = bidirectional_loss(sim, config)
    dsim = grad_wrt_similarity(sim, config)
    dX = dsim @ Y
    dY = dsim.T @ X
    return value, dX, dY


def loss_grad(
    X: np.ndarray, Y: np.ndarray, config: LossConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and gradients with respect to pre-normalization embeddings.

    Inputs must already be unit-norm; the Jacobian of L2 normalization
    at unit norm reduces to the tangent projection I - x x^T, which is
    applied per row.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    for name, M in (("X", X), ("Y", Y)):
        norms = np.linalg.norm(M, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError(f"{name} rows must be unit-norm (max |n-1| = {abs(norms - 1).max():.2e})")
    value, dX, dY = loss_and_grad_wrt_embeddings(X, Y, config)
    dX = dX - (dX * X).sum(axis=1, keepdims=True) * X
    dY = dY - (dY * Y).sum(axis=1, keepdims=True) * Y
    if not (np.all(np.isfinite(dX)) and np.all(np.isfinite(dY))):
        raise NumericalError("non-finite ranking-loss gradient")
    return value, dX, dY
