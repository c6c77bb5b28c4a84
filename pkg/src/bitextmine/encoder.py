"""Layered sentence encoder producing unit-norm embeddings, with
masked-token-prediction training objectives and progressive layer
stacking.

Architecture, per token position:

    embed -> L residual blocks h + tanh(h W + b) -> (per-position path)

Sentence path: mean-pool the final hidden states over non-padding
positions, apply the output projection, L2-normalize. The masked-token
path instead projects each masked position and applies the prediction
head. Residual blocks keep the identity function reachable (zero
weights) and are smooth everywhere, so analytic gradients can be
checked against central finite differences.

Checkpoint format: magic ``BXEN``, version, five little-endian uint32
config integers (vocab_size, hidden_dim, num_layers, max_seq_len,
embed_dim), then the parameter tensors as little-endian float64 in
declared order. Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import math
import struct
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .corpus import SentencePair
from .errors import CheckpointError, NumericalError
from .vocab import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    TokenSequence,
    Vocab,
    word_tokens,
)

_MAGIC = b"BXEN"
_VERSION = 1
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_dim: int
    num_layers: int
    max_seq_len: int
    embed_dim: int = 0  # 0 means "same as hidden_dim"

    def __post_init__(self) -> None:
        if self.embed_dim == 0:
            object.__setattr__(self, "embed_dim", self.hidden_dim)
        for name in ("vocab_size", "hidden_dim", "num_layers", "max_seq_len", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class LayerParams:
    weight: np.ndarray  # (d, d)
    bias: np.ndarray  # (d,)


@dataclass
class EncoderParams:
    config: EncoderConfig
    token_embeddings: np.ndarray  # (V, d)
    layers: list[LayerParams]
    output_weight: np.ndarray  # (d, e)
    output_bias: np.ndarray  # (e,)
    mlm_weight: np.ndarray  # (e, V)
    mlm_bias: np.ndarray  # (V,)

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Parameter tensors in the declared (checkpoint) order."""
        yield "token_embeddings", self.token_embeddings
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.weight", layer.weight
            yield f"layers.{i}.bias", layer.bias
        yield "output.weight", self.output_weight
        yield "output.bias", self.output_bias
        yield "mlm.weight", self.mlm_weight
        yield "mlm.bias", self.mlm_bias

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            config=self.config,
            token_embeddings=self.token_embeddings.copy(),
            layers=[LayerParams(l.weight.copy(), l.bias.copy()) for l in self.layers],
            output_weight=self.output_weight.copy(),
            output_bias=self.output_bias.copy(),
            mlm_weight=self.mlm_weight.copy(),
            mlm_bias=self.mlm_bias.copy(),
        )


def init_params(config: EncoderConfig, seed: int = 0) -> EncoderParams:
    rng = np.random.default_rng(seed)
    d, e, v = config.hidden_dim, config.embed_dim, config.vocab_size
    return EncoderParams(
        config=config,
        token_embeddings=rng.normal(0.0, 0.1, (v, d)),
        layers=[
            LayerParams(rng.normal(0.0, 1.0 / math.sqrt(d), (d, d)), np.zeros(d))
            for _ in range(config.num_layers)
        ],
        output_weight=rng.normal(0.0, 1.0 / math.sqrt(d), (d, e)),
        output_bias=np.zeros(e),
        mlm_weight=rng.normal(0.0, 0.02, (e, v)),
        mlm_bias=np.zeros(v),
    )


def zeros_like_params(params: EncoderParams) -> EncoderParams:
    return EncoderParams(
        config=params.config,
        token_embeddings=np.zeros_like(params.token_embeddings),
        layers=[
            LayerParams(np.zeros_like(l.weight), np.zeros_like(l.bias))
            for l in params.layers
        ],
        output_weight=np.zeros_like(params.output_weight),
        output_bias=np.zeros_like(params.output_bias),
        mlm_weight=np.zeros_like(params.mlm_weight),
        mlm_bias=np.zeros_like(params.mlm_bias),
    )


def _as_id_array(tokens: TokenSequence | Sequence[int]) -> np.ndarray:
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("token sequence must be a non-empty 1-D id list")
    return arr


def _check_ids(params: EncoderParams, ids: np.ndarray) -> None:
    if ids.size > params.config.max_seq_len:
        raise ValueError(
            f"sequence length {ids.size} exceeds max_seq_len {params.config.max_seq_len}"
        )
    if ids.min() < 0 or ids.max() >= params.config.vocab_size:
        raise ValueError("token id out of range")


def encode(params: EncoderParams, tokens: TokenSequence | Sequence[int]) -> np.ndarray:
    """Embed one token sequence as a unit-norm vector."""
    ids = _as_id_array(tokens)
    _check_ids(params, ids)
    h = params.token_embeddings[ids]
    for layer in params.layers:
        h = h + np.tanh(h @ layer.weight + layer.bias)
    content = h[ids != PAD_ID]
    if content.shape[0] == 0:
        raise ValueError("sequence has no content positions (all padding)")
    pooled = content.mean(axis=0)
    u = pooled @ params.output_weight + params.output_bias
    norm = float(np.linalg.norm(u))
    if norm < _NORM_EPS:
        raise NumericalError("degenerate encoder state: zero vector before normalization")
    return u / norm


def encode_batch(
    params: EncoderParams, batch: Sequence[TokenSequence | Sequence[int]]
) -> np.ndarray:
    """Row i equals encode() of item i exactly; order preserved."""
    if len(batch) == 0:
        return np.zeros((0, params.config.embed_dim))
    return np.stack([encode(params, item) for item in batch])


# ---------------------------------------------------------------------------
# Batched forward/backward used by training. Rows of the batched forward are
# mathematically identical to encode(); bitwise equality is only promised by
# encode_batch above.
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    ids: np.ndarray  # (B, T) padded with PAD_ID
    content_mask: np.ndarray  # (B, T) bool
    counts: np.ndarray  # (B,)
    hiddens: list[np.ndarray]  # H_0 .. H_L, each (B, T, d)
    gates: list[np.ndarray]  # tanh pre-activations per layer, (B, T, d)
    pooled: np.ndarray | None = None  # (B, d)
    pre_norm: np.ndarray | None = None  # (B, e)
    norms: np.ndarray | None = None  # (B,)


def pad_batch(batch: Sequence[TokenSequence | Sequence[int]]) -> np.ndarray:
    arrs = [_as_id_array(item) for item in batch]
    width = max(a.size for a in arrs)
    ids = np.full((len(arrs), width), PAD_ID, dtype=np.int64)
    for i, a in enumerate(arrs):
        ids[i, : a.size] = a
    return ids


def _forward_hiddens(params: EncoderParams, ids: np.ndarray) -> ForwardCache:
    if ids.shape[1] > params.config.max_seq_len:
        raise ValueError(
            f"batch width {ids.shape[1]} exceeds max_seq_len {params.config.max_seq_len}"
        )
    if ids.min() < 0 or ids.max() >= params.config.vocab_size:
        raise ValueError("token id out of range")
    mask = ids != PAD_ID
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("batch contains an all-padding sequence")
    h = params.token_embeddings[ids]
    hiddens = [h]
    gates = []
    for layer in params.layers:
        g = np.tanh(h @ layer.weight + layer.bias)
        h = h + g
        gates.append(g)
        hiddens.append(h)
    return ForwardCache(ids=ids, content_mask=mask, counts=counts, hiddens=hiddens, gates=gates)


def forward_batch(
    params: EncoderParams, batch: Sequence[TokenSequence | Sequence[int]]
) -> tuple[np.ndarray, ForwardCache]:
    """Unit-norm embeddings for a batch, plus the cache for backprop."""
    cache = _forward_hiddens(params, pad_batch(batch))
    top = cache.hiddens[-1]
    weighted = cache.content_mask[:, :, None] / cache.counts[:, None, None]
    cache.pooled = (top * weighted).sum(axis=1)
    u = cache.pooled @ params.output_weight + params.output_bias
    cache.pre_norm = u
    cache.norms = np.linalg.norm(u, axis=1)
    if np.any(cache.norms < _NORM_EPS):
        raise NumericalError("degenerate encoder state: zero vector before normalization")
    return u / cache.norms[:, None], cache


def grad_through_normalization(cache: ForwardCache, d_normalized: np.ndarray) -> np.ndarray:
    """Map d(loss)/d(normalized) to d(loss)/d(pre-norm) via the L2 Jacobian."""
    u = cache.pre_norm
    norms = cache.norms[:, None]
    v = u / norms
    inner = (d_normalized * v).sum(axis=1, keepdims=True)
    return (d_normalized - inner * v) / norms


def _backward_layers(
    params: EncoderParams, cache: ForwardCache, d_top: np.ndarray, grads: EncoderParams
) -> None:
    """Backprop from d(loss)/d(H_L) into layer and embedding gradients."""
    d = params.config.hidden_dim
    dh = d_top
    for l in range(len(params.layers) - 1, -1, -1):
        da = dh * (1.0 - cache.gates[l] ** 2)
        h_prev = cache.hiddens[l]
        grads.layers[l].weight += h_prev.reshape(-1, d).T @ da.reshape(-1, d)
        grads.layers[l].bias += da.sum(axis=(0, 1))
        dh = dh + da @ params.layers[l].weight.T
    np.add.at(grads.token_embeddings, cache.ids.ravel(), dh.reshape(-1, d))


def backward_batch(
    params: EncoderParams,
    cache: ForwardCache,
    d_pre_norm: np.ndarray,
    grads: EncoderParams | None = None,
) -> EncoderParams:
    """Accumulate parameter gradients from d(loss)/d(pre-norm embeddings)."""
    grads = grads if grads is not None else zeros_like_params(params)
    grads.output_weight += cache.pooled.T @ d_pre_norm
    grads.output_bias += d_pre_norm.sum(axis=0)
    dpooled = d_pre_norm @ params.output_weight.T
    weighted = cache.content_mask[:, :, None] / cache.counts[:, None, None]
    d_top = dpooled[:, None, :] * weighted
    _backward_layers(params, cache, d_top, grads)
    return grads


# ---------------------------------------------------------------------------
# Masked-token objectives (monolingual and translation-pair variants).
# ---------------------------------------------------------------------------

MLM_FRACTION = 0.2
MLM_CAP = 80

_NEVER_MASK = (PAD_ID, CLS_ID, SEP_ID)


@dataclass
class MaskedBatch:
    input_ids: np.ndarray  # (B, T), masked positions replaced by MASK
    target_ids: np.ndarray  # (B, T), original ids
    mask_positions: np.ndarray  # (B, T) bool

    def masked_count(self) -> int:
        return int(self.mask_positions.sum())


def plan_masks(
    batch: Sequence[TokenSequence | Sequence[int]],
    rng: np.random.Generator,
    fraction: float = MLM_FRACTION,
    cap: int = MLM_CAP,
) -> MaskedBatch:
    """Mask min(ceil(fraction * maskable), cap) positions per sequence.

    Masked positions are replaced by the MASK id (no random/keep split).
    Special tokens and padding are never masked.
    """
    ids = pad_batch(batch)
    input_ids = ids.copy()
    positions = np.zeros_like(ids, dtype=bool)
    for row in range(ids.shape[0]):
        maskable = np.flatnonzero(~np.isin(ids[row], _NEVER_MASK))
        if maskable.size == 0:
            continue
        n = min(math.ceil(fraction * maskable.size), cap)
        chosen = rng.choice(maskable, size=n, replace=False)
        positions[row, chosen] = True
        input_ids[row, chosen] = MASK_ID
    return MaskedBatch(input_ids=input_ids, target_ids=ids, mask_positions=positions)


def mlm_loss_and_grad(
    params: EncoderParams, batch: MaskedBatch
) -> tuple[float, EncoderParams]:
    """Mean cross-entropy at masked positions, with analytic gradients."""
    m_total = batch.masked_count()
    if m_total == 0:
        raise ValueError("no masked positions in batch")
    cache = _forward_hiddens(params, batch.input_ids)
    top = cache.hiddens[-1]
    rows = top[batch.mask_positions]  # (M, d)
    proj = rows @ params.output_weight + params.output_bias  # (M, e)
    logits = proj @ params.mlm_weight + params.mlm_bias  # (M, V)
    targets = batch.target_ids[batch.mask_positions]

    zmax = logits.max(axis=1, keepdims=True)
    shifted = logits - zmax
    lse = zmax[:, 0] + np.log(np.exp(shifted).sum(axis=1))
    picked = logits[np.arange(m_total), targets]
    loss = float(np.sum(lse - picked) / m_total)
    if not math.isfinite(loss):
        raise NumericalError("non-finite masked-prediction loss")

    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    dlogits = probs
    dlogits[np.arange(m_total), targets] -= 1.0
    dlogits /= m_total

    grads = zeros_like_params(params)
    grads.mlm_weight += proj.T @ dlogits
    grads.mlm_bias += dlogits.sum(axis=0)
    dproj = dlogits @ params.mlm_weight.T
    grads.output_weight += rows.T @ dproj
    grads.output_bias += dproj.sum(axis=0)
    d_top = np.zeros_like(top)
    d_top[batch.mask_positions] = dproj @ params.output_weight.T
    _backward_layers(params, cache, d_top, grads)
    return loss, grads


def tlm_sequence(pair: SentencePair, vocab: Vocab, max_len: int) -> TokenSequence:
    """Concatenated translation-pair layout [CLS] src [SEP] tgt [SEP].

    An empty side drops its segment (and separator); no language
    identifier token is inserted. Truncation trims the longer segment
    token by token until the layout fits max_len.
    """
    segments = []
    for side in (pair.src, pair.tgt):
        toks: list[int] = []
        for word in side.text.split():
            toks.extend(word_tokens(word, vocab))
        if toks:
            segments.append(toks)
    total = 1 + sum(len(s) + 1 for s in segments)
    if total < 3:
        raise ValueError("translation-pair sequence shorter than 3 tokens")
    budget = max_len - 1 - len(segments)
    while sum(len(s) for s in segments) > budget:
        longest = max(segments, key=len)
        longest.pop()
    ids: list[int] = [CLS_ID]
    for seg in segments:
        ids.extend(seg)
        ids.append(SEP_ID)
    return TokenSequence(
        ids=tuple(ids),
        lang=f"{pair.src.lang}+{pair.tgt.lang}",
        surface_len=len(pair.src.text) + len(pair.tgt.text),
    )


def tlm_batch(
    pairs: Sequence[SentencePair],
    vocab: Vocab,
    max_len: int,
    rng: np.random.Generator,
    fraction: float = MLM_FRACTION,
    cap: int = MLM_CAP,
) -> MaskedBatch:
    """Masked batch over concatenated translation pairs."""
    seqs = [tlm_sequence(p, vocab, max_len) for p in pairs]
    return plan_masks(seqs, rng, fraction=fraction, cap=cap)


def stack_grow(params: EncoderParams, target_layers: int) -> EncoderParams:
    """Duplicate the trained layer stack to initialize a deeper encoder.

    Output layer j copies input layer j mod L bitwise; all other tensors
    are copied verbatim.
    """
    current = len(params.layers)
    if target_layers < current or target_layers % current != 0:
        raise ValueError(
            f"target_layers={target_layers} must be a positive multiple of {current}"
        )
    grown = params.copy()
    grown.config = replace(params.config, num_layers=target_layers)
    grown.layers = [
        LayerParams(
            params.layers[j % current].weight.copy(),
            params.layers[j % current].bias.copy(),
        )
        for j in range(target_layers)
    ]
    return grown


# ---------------------------------------------------------------------------
# Checkpoint serialization (parameters only; the trainer wraps this format
# with optimizer state).
# ---------------------------------------------------------------------------


class _Reader:
    """Byte reader that reports the offset of any truncation."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated at byte offset {self.pos} "
                f"(wanted {n} more bytes, file has {len(self.data)})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(n * 8), dtype="<f8").reshape(shape).copy()


def params_to_bytes(params: EncoderParams) -> bytes:
    cfg = params.config
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(
        struct.pack(
            "<6I",
            _VERSION,
            cfg.vocab_size,
            cfg.hidden_dim,
            cfg.num_layers,
            cfg.max_seq_len,
            cfg.embed_dim,
        )
    )
    for _, arr in params.named_arrays():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def params_from_reader(reader: _Reader) -> EncoderParams:
    if reader.take(4) != _MAGIC:
        raise CheckpointError(f"{reader.path}: bad magic at byte offset 0")
    version = reader.u32()
    if version != _VERSION:
        raise CheckpointError(f"{reader.path}: unsupported version {version}")
    cfg = EncoderConfig(
        vocab_size=reader.u32(),
        hidden_dim=reader.u32(),
        num_layers=reader.u32(),
        max_seq_len=reader.u32(),
        embed_dim=reader.u32(),
    )
    d, e, v = cfg.hidden_dim, cfg.embed_dim, cfg.vocab_size
    return EncoderParams(
        config=cfg,
        token_embeddings=reader.array((v, d)),
        layers=[
            LayerParams(reader.array((d, d)), reader.array((d,)))
            for _ in range(cfg.num_layers)
        ],
        output_weight=reader.array((d, e)),
        output_bias=reader.array((e,)),
        mlm_weight=reader.array((e, v)),
        mlm_bias=reader.array((v,)),
    )


def save_params(params: EncoderParams, path) -> None:
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, params_to_bytes(params))


def load_params(path) -> EncoderParams:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    params = params_from_reader(reader)
    if reader.pos != len(reader.data):
        raise CheckpointError(
            f"{path}: {len(reader.data) - reader.pos} trailing bytes at offset {reader.pos}"
        )
    return params
