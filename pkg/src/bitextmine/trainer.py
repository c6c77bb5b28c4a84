"""Training drivers: masked-token pretraining with progressive layer
stacking, dual-encoder fine-tuning with the bidirectional ranking loss,
an adaptive-moment optimizer with decoupled weight decay, and exact
checkpoint round-trips.

Determinism: every step draws from a fresh generator seeded by
(config seed, stream tag, step index), so a resumed run reproduces the
unbroken run bit for bit. The learning rate decays linearly to zero
over the configured step horizon.

Training log lines: ``step=<n> loss=<f> lr=<f> pairs_seen=<n>``.
"""

from __future__ import annotations

import io
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import TextIO

import numpy as np

from .corpus import Sentence, SentencePair
from .encoder import (
    EncoderConfig,
    EncoderParams,
    MLM_CAP,
    MLM_FRACTION,
    _Reader,
    backward_batch,
    forward_batch,
    grad_through_normalization,
    mlm_loss_and_grad,
    params_from_reader,
    params_to_bytes,
    plan_masks,
    stack_grow,
    tlm_sequence,
)
from .errors import CheckpointError, NumericalError
from .fileio import atomic_write_bytes
from .loss import LossConfig, loss_and_grad_wrt_embeddings
from .negatives import shard_batch, sharded_bidirectional_loss
from .vocab import Vocab, tokenize_sentence

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8

_CKPT_MAGIC = b"BXCK"
_CKPT_VERSION = 1

# Stream tags keep the per-step RNG draws of different objectives disjoint.
_STREAM_FINETUNE = 1
_STREAM_MLM = 2
_STREAM_TLM = 3


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    steps: int = 2000
    learning_rate: float = 1e-3
    margin: float = 0.3
    scale: float = 10.0
    scale_mode: str = "similarity"
    shards: int = 1
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be positive")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.shards < 1 or self.batch_size % self.shards != 0:
            raise ValueError(
                f"shards={self.shards} must divide batch_size={self.batch_size}"
            )
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def loss_config(self) -> LossConfig:
        return LossConfig(margin=self.margin, scale=self.scale, scale_mode=self.scale_mode)


@dataclass
class OptimizerState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0


def init_optimizer_state(params: EncoderParams) -> OptimizerState:
    return OptimizerState(
        first_moment={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
        second_moment={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
        step_count=0,
    )


def lr_at(config: TrainConfig, step: int) -> float:
    """Linearly decayed learning rate for 1-based step numbers."""
    return config.learning_rate * max(0.0, 1.0 - (step - 1) / config.steps)


def optimizer_step(
    params: EncoderParams,
    grads: EncoderParams,
    state: OptimizerState,
    config: TrainConfig,
) -> tuple[EncoderParams, OptimizerState]:
    """One adaptive-moment update with decoupled weight decay.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2; both bias-corrected;
    theta <- theta - lr_t (m_hat / (sqrt(v_hat) + eps) + wd * theta).
    """
    t = state.step_count + 1
    lr_t = lr_at(config, t)
    new_params = params.copy()
    new_first: dict[str, np.ndarray] = {}
    new_second: dict[str, np.ndarray] = {}
    grad_map = dict(grads.named_arrays())
    for name, target in new_params.named_arrays():
        g = grad_map[name]
        m = BETA1 * state.first_moment[name] + (1.0 - BETA1) * g
        v = BETA2 * state.second_moment[name] + (1.0 - BETA2) * g * g
        m_hat = m / (1.0 - BETA1**t)
        v_hat = v / (1.0 - BETA2**t)
        update = lr_t * (m_hat / (np.sqrt(v_hat) + EPS) + config.weight_decay * target)
        if not np.all(np.isfinite(update)):
            raise NumericalError(f"non-finite optimizer update for {name!r} at step {t}")
        target -= update
        new_first[name] = m
        new_second[name] = v
    return new_params, OptimizerState(new_first, new_second, t)


def _write_log(log: TextIO | None, step: int, loss: float, lr: float, pairs_seen: int) -> None:
    if log is not None:
        log.write(f"step={step} loss={loss:.6f} lr={lr:.8f} pairs_seen={pairs_seen}\n")


def finetune_dual_encoder(
    params: EncoderParams,
    pair_corpus: Sequence[SentencePair],
    config: TrainConfig,
    vocab: Vocab,
    *,
    state: OptimizerState | None = None,
    stop_step: int | None = None,
    log: TextIO | None = None,
    checkpoint_path=None,
    checkpoint_interval: int = 0,
) -> tuple[EncoderParams, OptimizerState]:
    """Train the shared encoder on translation pairs with the sharded
    bidirectional additive-margin loss.

    Both sides are encoded with the same parameters. Resuming from a
    checkpointed (params, state) reproduces the unbroken run exactly;
    training continues from state.step_count up to ``stop_step``
    (default: the full configured horizon).
    """
    if not pair_corpus:
        raise ValueError("empty pair corpus")
    state = state if state is not None else init_optimizer_state(params)
    stop = config.steps if stop_step is None else min(stop_step, config.steps)
    loss_cfg = config.loss_config()
    max_len = params.config.max_seq_len
    src_seqs = [tokenize_sentence(p.src, vocab, max_len) for p in pair_corpus]
    tgt_seqs = [tokenize_sentence(p.tgt, vocab, max_len) for p in pair_corpus]

    while state.step_count < stop:
        t = state.step_count
        rng = np.random.default_rng([config.seed, _STREAM_FINETUNE, t])
        idx = rng.integers(0, len(pair_corpus), size=config.batch_size)
        vx, cache_x = forward_batch(params, [src_seqs[i] for i in idx])
        vy, cache_y = forward_batch(params, [tgt_seqs[i] for i in idx])

        loss_value = sharded_bidirectional_loss(
            shard_batch(vx, vy, config.shards), loss_cfg
        )
        if not math.isfinite(loss_value):
            raise NumericalError(
                f"ranking loss diverged at step {t + 1}; last checkpoint retained"
            )
        _, dvx, dvy = loss_and_grad_wrt_embeddings(vx, vy, loss_cfg)
        grads = backward_batch(params, cache_x, grad_through_normalization(cache_x, dvx))
        backward_batch(params, cache_y, grad_through_normalization(cache_y, dvy), grads)

        lr_used = lr_at(config, t + 1)
        params, state = optimizer_step(params, grads, state, config)
        _write_log(log, state.step_count, loss_value, lr_used, state.step_count * config.batch_size)
        if (
            checkpoint_path is not None
            and checkpoint_interval > 0
            and state.step_count % checkpoint_interval == 0
        ):
            save_checkpoint(params, state, checkpoint_path)
    return params, state


@dataclass(frozen=True)
class Stage:
    num_layers: int
    steps: int


def pretrain(
    params: EncoderParams,
    corpus: Sequence[Sentence],
    pair_corpus: Sequence[SentencePair],
    config: TrainConfig,
    stage_schedule: Sequence[Stage],
    vocab: Vocab,
    *,
    mask_fraction: float = MLM_FRACTION,
    mask_cap: int = MLM_CAP,
    mix: tuple[int, int] = (1, 1),
    log: TextIO | None = None,
) -> EncoderParams:
    """Masked-token pretraining over monolingual and translation-pair
    batches, alternating at ``mix`` = (mlm, tlm) within each cycle, with
    progressive layer stacking between stages.

    Stage layer counts must each divide the next; parameters learned in
    one stage are duplicated to initialize the next. A fresh optimizer
    (and decay horizon) starts each stage.
    """
    if not stage_schedule:
        raise ValueError("stage schedule is empty")
    if len(params.layers) != stage_schedule[0].num_layers:
        raise ValueError(
            f"params have {len(params.layers)} layers but the first stage wants "
            f"{stage_schedule[0].num_layers}"
        )
    for a, b in zip(stage_schedule, stage_schedule[1:]):
        if b.num_layers % a.num_layers != 0 or b.num_layers < a.num_layers:
            raise ValueError(
                f"stage layers {b.num_layers} must be a multiple of {a.num_layers}"
            )
    if not corpus and not pair_corpus:
        raise ValueError("pretraining needs monolingual sentences or pairs")
    mlm_share, tlm_share = mix
    if mlm_share < 0 or tlm_share < 0 or mlm_share + tlm_share == 0:
        raise ValueError(f"bad objective mix {mix!r}")
    if mlm_share and not corpus:
        raise ValueError("MLM batches requested but the monolingual corpus is empty")
    if tlm_share and not pair_corpus:
        raise ValueError("TLM batches requested but the pair corpus is empty")

    max_len = params.config.max_seq_len
    mono_seqs = [tokenize_sentence(s, vocab, max_len) for s in corpus]
    tlm_seqs = [tlm_sequence(p, vocab, max_len) for p in pair_corpus]

    pairs_seen = 0
    global_step = 0
    cycle = mlm_share + tlm_share
    for stage_idx, stage in enumerate(stage_schedule):
        if len(params.layers) != stage.num_layers:
            params = stack_grow(params, stage.num_layers)
        stage_config = replace(config, steps=stage.steps)
        state = init_optimizer_state(params)
        for t in range(stage.steps):
            use_mlm = (t % cycle) < mlm_share
            stream = _STREAM_MLM if use_mlm else _STREAM_TLM
            rng = np.random.default_rng([config.seed, stream, stage_idx, t])
            if use_mlm:
                idx = rng.integers(0, len(mono_seqs), size=config.batch_size)
                batch = plan_masks(
                    [mono_seqs[i] for i in idx], rng, fraction=mask_fraction, cap=mask_cap
                )
            else:
                idx = rng.integers(0, len(tlm_seqs), size=config.batch_size)
                batch = plan_masks(
                    [tlm_seqs[i] for i in idx], rng, fraction=mask_fraction, cap=mask_cap
                )
                pairs_seen += config.batch_size
            loss_value, grads = mlm_loss_and_grad(params, batch)
            if not math.isfinite(loss_value):
                raise NumericalError(
                    f"pretraining loss diverged at stage {stage_idx} step {t + 1}"
                )
            lr_used = lr_at(stage_config, t + 1)
            params, state = optimizer_step(params, grads, state, stage_config)
            global_step += 1
            _write_log(log, global_step, loss_value, lr_used, pairs_seen)
    return params


# ---------------------------------------------------------------------------
# Checkpointing: parameters plus optimizer state, exact round trip.
# ---------------------------------------------------------------------------


def checkpoint_to_bytes(params: EncoderParams, state: OptimizerState | None) -> bytes:
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<I", _CKPT_VERSION))
    buf.write(params_to_bytes(params))
    if state is None:
        buf.write(struct.pack("<B", 0))
        return buf.getvalue()
    buf.write(struct.pack("<B", 1))
    buf.write(struct.pack("<Q", state.step_count))
    for moments in (state.first_moment, state.second_moment):
        for name, _ in params.named_arrays():
            buf.write(np.ascontiguousarray(moments[name], dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(params: EncoderParams, state: OptimizerState | None, path) -> None:
    atomic_write_bytes(path, checkpoint_to_bytes(params, state))


def load_checkpoint(
    path, expect_config: EncoderConfig | None = None
) -> tuple[EncoderParams, OptimizerState | None]:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    if reader.take(4) != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic at byte offset 0")
    version = reader.u32()
    if version != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    params = params_from_reader(reader)
    if expect_config is not None and params.config != expect_config:
        raise CheckpointError(
            f"{path}: checkpoint config {params.config} does not match expected {expect_config}"
        )
    has_state = struct.unpack("<B", reader.take(1))[0]
    state: OptimizerState | None = None
    if has_state:
        step_count = struct.unpack("<Q", reader.take(8))[0]
        first: dict[str, np.ndarray] = {}
        second: dict[str, np.ndarray] = {}
        for moments in (first, second):
            for name, arr in params.named_arrays():
                moments[name] = reader.array(arr.shape)
        state = OptimizerState(first, second, step_count)
    if reader.pos != len(reader.data):
        raise CheckpointError(
            f"{path}: {len(reader.data) - reader.pos} trailing bytes at offset {reader.pos}"
        )
    return params, state
