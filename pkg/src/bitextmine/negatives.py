"""Deterministic single-process simulation of cross-shard negative
sampling, plus hard-negative mining with a weaker encoder.

A batch of N aligned embedding pairs is split into K equal contiguous
shards. Each shard ranks its own rows against the column space gathered
from every shard (the broadcast), so the per-row loss terms, averaged
in global order, reproduce the unsharded bidirectional loss. Disabling
the broadcast restricts each row to its local shard's columns, which
can only shrink softmax denominators and therefore the loss.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, SentencePair
from .errors import NumericalError
from .loss import LossConfig, SCALE_SIMILARITY


@dataclass
class ShardedBatch:
    shards: list[tuple[np.ndarray, np.ndarray]]  # K blocks of (X_k, Y_k)
    global_order: np.ndarray  # (K, N/K) global row index per (shard, local)

    @property
    def num_shards(self) -> int:
        return len(self.shards)

    def reconstruct(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenate shards back into the original batch, bit-identical."""
        n = self.global_order.size
        d = self.shards[0][0].shape[1]
        X = np.empty((n, d))
        Y = np.empty((n, d))
        for (xk, yk), order in zip(self.shards, self.global_order):
            X[order] = xk
            Y[order] = yk
        return X, Y


def shard_batch(X: np.ndarray, Y: np.ndarray, K: int) -> ShardedBatch:
    """Contiguous equal partition of an aligned batch into K shards."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ValueError(f"X and Y must be matching N x d matrices, got {X.shape}, {Y.shape}")
    n = X.shape[0]
    if K < 1 or n % K != 0:
        raise ValueError(f"shard count {K} must divide batch size {n}")
    size = n // K
    shards = [(X[k * size : (k + 1) * size], Y[k * size : (k + 1) * size]) for k in range(K)]
    order = np.arange(n, dtype=np.int64).reshape(K, size)
    return ShardedBatch(shards=shards, global_order=order)


def _margined_logits(sim: np.ndarray, pos_cols: np.ndarray, config: LossConfig) -> np.ndarray:
    pos = np.zeros_like(sim)
    pos[np.arange(sim.shape[0]), pos_cols] = 1.0
    if config.scale_mode == SCALE_SIMILARITY:
        return config.scale * (sim - config.margin * pos)
    return config.scale**2 * sim - config.margin * pos


def _row_loss_terms(z: np.ndarray, pos_cols: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), pos_cols]


def sharded_bidirectional_loss(
    sharded: ShardedBatch, config: LossConfig, broadcast: bool = True
) -> float:
    """Bidirectional ranking loss computed shard by shard.

    With the broadcast every shard's rows see the full gathered column
    space and the result equals the unsharded loss; without it each row
    competes only against its local shard (the ablation setting).
    """
    n = sharded.global_order.size
    x_all = np.concatenate([xk for xk, _ in sharded.shards], axis=0)
    y_all = np.concatenate([yk for _, yk in sharded.shards], axis=0)
    order_flat = sharded.global_order.reshape(-1)
    # Column j of the gathered block holds global row order_flat[j].
    col_of_global = np.empty(n, dtype=np.int64)
    col_of_global[order_flat] = np.arange(n)

    fwd_terms = np.empty(n)
    bwd_terms = np.empty(n)
    for k, (xk, yk) in enumerate(sharded.shards):
        rows = sharded.global_order[k]
        if broadcast:
            sim_fwd = xk @ y_all.T
            sim_bwd = yk @ x_all.T
            pos = col_of_global[rows]
        else:
            sim_fwd = xk @ yk.T
            sim_bwd = yk @ xk.T
            pos = np.arange(rows.size)
        if not (np.all(np.isfinite(sim_fwd)) and np.all(np.isfinite(sim_bwd))):
            raise NumericalError("non-finite similarity in sharded loss")
        fwd_terms[rows] = _row_loss_terms(_margined_logits(sim_fwd, pos, config), pos)
        bwd_terms[rows] = _row_loss_terms(_margined_logits(sim_bwd, pos, config), pos)
    return float(np.sum(fwd_terms) / n + np.sum(bwd_terms) / n)


@dataclass
class HardNegativeSet:
    """Per-source mined negatives: source id -> H (sentence, score) pairs."""

    negatives: dict[str, list[tuple[Sentence, float]]]
    count_per_source: int


def mine_hard_negatives(
    encode_sentence: Callable[[Sentence], np.ndarray],
    pairs: Sequence[SentencePair],
    pool: Sequence[Sentence],
    count: int = 3,
) -> HardNegativeSet:
    """Mine the highest-cosine pool sentences per source, excluding the
    true target, under a (typically weaker) encoder.

    ``encode_sentence`` maps a sentence to a unit-norm vector. Ties break
    by pool order.
    """
    if count < 1:
        raise ValueError(f"negative count must be >= 1, got {count}")
    if len(pool) < count + 1:
        raise ValueError(f"pool of {len(pool)} cannot supply {count} negatives plus the target")
    pool_vecs = np.stack([encode_sentence(s) for s in pool])
    out: dict[str, list[tuple[Sentence, float]]] = {}
    for pair in pairs:
        q = encode_sentence(pair.src)
        scores = pool_vecs @ q
        ranked = np.argsort(-scores, kind="stable")
        picked: list[tuple[Sentence, float]] = []
        for idx in ranked:
            if pool[idx].id == pair.tgt.id:
                continue
            picked.append((pool[idx], float(scores[idx])))
            if len(picked) == count:
                break
        out[pair.src.id] = picked
    return HardNegativeSet(negatives=out, count_per_source=count)


@dataclass
class AugmentedBatch:
    """Aligned batch whose source-to-target direction gained extra columns."""

    X: np.ndarray  # (N, d) source embeddings
    Y: np.ndarray  # (N, d) positive target embeddings
    extra_targets: np.ndarray  # (H*N, d) mined negatives, grouped by source


def augment_batch_with_hard_negatives(
    X: np.ndarray,
    Y: np.ndarray,
    src_ids: Sequence[str],
    negset: HardNegativeSet,
    encode_sentence: Callable[[Sentence], np.ndarray],
) -> AugmentedBatch:
    """Append each source's mined negatives to the target column space.

    Mined targets never appear as positives; the target-to-source
    direction is unaffected. With count_per_source == 0 this is the
    identity extension.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(src_ids) != X.shape[0]:
        raise ValueError("one source id per batch row is required")
    h = negset.count_per_source
    extras: list[np.ndarray] = []
    for sid in src_ids:
        mined = negset.negatives.get(sid)
        if mined is None or len(mined) != h:
            raise ValueError(f"source {sid!r} lacks its {h} mined negatives")
        for sent, _ in mined:
            extras.append(encode_sentence(sent))
    extra = np.stack(extras) if extras else np.zeros((0, X.shape[1]))
    return AugmentedBatch(X=X, Y=Y, extra_targets=extra)


def augmented_bidirectional_loss(batch: AugmentedBatch, config: LossConfig) -> float:
    """Bidirectional loss where forward rows rank against [Y; extras]."""
    n = batch.X.shape[0]
    columns = np.concatenate([batch.Y, batch.extra_targets], axis=0)
    sim_fwd = batch.X @ columns.T
    pos = np.arange(n)
    if not np.all(np.isfinite(sim_fwd)):
        raise NumericalError("non-finite similarity in augmented loss")
    fwd = _row_loss_terms(_margined_logits(sim_fwd, pos, config), pos)
    sim_bwd = batch.Y @ batch.X.T
    bwd = _row_loss_terms(_margined_logits(sim_bwd, pos, config), pos)
    return float(np.sum(fwd) / n + np.sum(bwd) / n)
