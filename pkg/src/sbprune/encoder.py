"""BERT-style bidirectional encoder over the autodiff core.

Post-layer-norm residual wiring, the original BERT order:

    x <- layer_norm(x + attention(x))
    x <- layer_norm(x + ffn(x))

Attention masks are additive: masked key positions get -1e9 before the
softmax, so their weight underflows to zero.  Sentence embeddings are the
mean of the unmasked token states; there is no CLS token, no segment
embeddings, and no dropout (fine-tuning at this scale converges without
it, a deliberate divergence from full-size BERT recipes).

Everything routes through ``encode_batch``; the single-sequence ``encode``
is a batch of one.  Internally a batch runs as one [B*T, d] matrix through
the projections and as stacked [B, h, T, T] products through attention,
which keeps the tape short and the matmuls large.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, InputError
from .tensor import Tensor

MASK_NEG = -1e9

_NORMAL_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 32
    num_layers: int = 4
    num_heads: int = 4
    ffn_dim: int = 64
    max_seq_len: int = 32
    layer_norm_eps: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "hidden_dim", "num_layers", "num_heads",
                     "ffn_dim", "max_seq_len"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim must be divisible by num_heads: "
                f"{self.hidden_dim} % {self.num_heads} != 0"
            )
        if self.layer_norm_eps <= 0:
            raise ConfigError(f"layer_norm_eps must be positive, got {self.layer_norm_eps}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": int(self.vocab_size),
            "hidden_dim": int(self.hidden_dim),
            "num_layers": int(self.num_layers),
            "num_heads": int(self.num_heads),
            "ffn_dim": int(self.ffn_dim),
            "max_seq_len": int(self.max_seq_len),
            "layer_norm_eps": float(self.layer_norm_eps),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class LayerParams:
    """One transformer block: attention projections, FFN, two layer norms."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    bo: Tensor
    attn_gain: Tensor
    attn_bias: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ffn_gain: Tensor
    ffn_bias: Tensor

    # canonical (suffix, field) order used for naming and serialization
    NAMED = (
        ("attn.wq", "wq"), ("attn.wk", "wk"), ("attn.wv", "wv"), ("attn.wo", "wo"),
        ("attn.bq", "bq"), ("attn.bk", "bk"), ("attn.bv", "bv"), ("attn.bo", "bo"),
        ("attn_ln.gain", "attn_gain"), ("attn_ln.bias", "attn_bias"),
        ("ffn.w1", "w1"), ("ffn.b1", "b1"), ("ffn.w2", "w2"), ("ffn.b2", "b2"),
        ("ffn_ln.gain", "ffn_gain"), ("ffn_ln.bias", "ffn_bias"),
    )


@dataclass
class EncoderModel:
    config: EncoderConfig
    token_embedding: Tensor
    position_embedding: Tensor
    layers: list
    # tokenizer vocabulary travels with the model so checkpoints are
    # self-contained; None for models used on pre-tokenized ids only
    vocab: Optional[object] = field(default=None, repr=False)

    def named_parameters(self):
        """(name, tensor) pairs in the canonical order: embeddings first,
        then ``layer.<i>.<part>`` with i contiguous from 0."""
        out = [("token_embedding", self.token_embedding),
               ("position_embedding", self.position_embedding)]
        for i, layer in enumerate(self.layers):
            for suffix, attr in LayerParams.NAMED:
                out.append((f"layer.{i}.{suffix}", getattr(layer, attr)))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def param_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.parameters():
            t.requires_grad = flag


def encoder_init(config: EncoderConfig, dtype=np.float32) -> EncoderModel:
    """Fresh model, parameters ~ N(0, 0.02) except layer-norm gain=1/bias=0.

    Draw order is the canonical parameter order, so one seed fixes every
    weight bit-for-bit.
    """
    rng = np.random.default_rng(config.seed)
    d, ffn = config.hidden_dim, config.ffn_dim

    def normal(*shape):
        return Tensor(rng.normal(0.0, _NORMAL_STD, size=shape).astype(dtype),
                      requires_grad=True)

    def ones(n):
        return Tensor(np.ones(n, dtype=dtype), requires_grad=True)

    def zeros(n):
        return Tensor(np.zeros(n, dtype=dtype), requires_grad=True)

    tok = normal(config.vocab_size, d)
    pos = normal(config.max_seq_len, d)
    layers = []
    for _ in range(config.num_layers):
        layers.append(LayerParams(
            wq=normal(d, d), wk=normal(d, d), wv=normal(d, d), wo=normal(d, d),
            bq=normal(d), bk=normal(d), bv=normal(d), bo=normal(d),
            attn_gain=ones(d), attn_bias=zeros(d),
            w1=normal(d, ffn), b1=normal(ffn), w2=normal(ffn, d), b2=normal(d),
            ffn_gain=ones(d), ffn_bias=zeros(d),
        ))
    return EncoderModel(config=config, token_embedding=tok,
                        position_embedding=pos, layers=layers)


def _check_batch(model: EncoderModel, ids: np.ndarray, mask: np.ndarray):
    cfg = model.config
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise InputError(
            f"token ids and mask must be matching 2-d arrays, got {ids.shape} and {mask.shape}"
        )
    b, t = ids.shape
    if t > cfg.max_seq_len:
        raise InputError(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    if t == 0:
        raise InputError("empty sequence")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InputError(
            f"token id out of range: ids must lie in [0, {cfg.vocab_size})"
        )
    if not np.isin(mask, (0, 1)).all():
        raise InputError("mask entries must be 0 or 1")
    return b, t


def encode_batch(model: EncoderModel, ids, mask) -> Tensor:
    """Hidden states [B, T, d] for a batch of id/mask rows."""
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask)
    b, t = _check_batch(model, ids, mask)
    cfg = model.config
    d, h = cfg.hidden_dim, cfg.num_heads
    hd = d // h
    dtype = model.token_embedding.data.dtype

    x = T.gather_rows(model.token_embedding, ids.reshape(-1))          # [B*T, d]
    pos_ids = np.tile(np.arange(t, dtype=np.int64), b)
    x = T.add(x, T.gather_rows(model.position_embedding, pos_ids))

    # [B, 1, 1, T] additive penalty on masked keys, broadcast over heads/queries
    key_mask = ((1 - mask.astype(np.int64)) * MASK_NEG).astype(dtype)
    key_mask = key_mask[:, None, None, :]
    inv_sqrt_hd = 1.0 / np.sqrt(hd)

    def split_heads(m: Tensor) -> Tensor:                              # [B*T,d] -> [B,h,T,hd]
        return T.transpose(T.reshape(m, (b, t, h, hd)), (0, 2, 1, 3))

    for layer in model.layers:
        q = split_heads(T.add_bias(T.matmul(x, layer.wq), layer.bq))
        k = split_heads(T.add_bias(T.matmul(x, layer.wk), layer.bk))
        v = split_heads(T.add_bias(T.matmul(x, layer.wv), layer.bv))
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), inv_sqrt_hd)
        att = T.softmax_rows(T.add_const(scores, key_mask))            # [B,h,T,T]
        ctx = T.matmul(att, v)                                         # [B,h,T,hd]
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b * t, d))
        attn_out = T.add_bias(T.matmul(ctx, layer.wo), layer.bo)
        x = T.layer_norm(T.add(x, attn_out), layer.attn_gain, layer.attn_bias,
                         cfg.layer_norm_eps)

        mid = T.gelu(T.add_bias(T.matmul(x, layer.w1), layer.b1))
        ffn_out = T.add_bias(T.matmul(mid, layer.w2), layer.b2)
        x = T.layer_norm(T.add(x, ffn_out), layer.ffn_gain, layer.ffn_bias,
                         cfg.layer_norm_eps)

    return T.reshape(x, (b, t, d))


def encode(model: EncoderModel, token_ids, mask) -> Tensor:
    """Hidden states [T, d] for one sequence."""
    ids = np.asarray(token_ids, dtype=np.int64)
    m = np.asarray(mask)
    if ids.ndim != 1:
        raise InputError(f"token ids must be 1-d, got shape {ids.shape}")
    out = encode_batch(model, ids[None, :], m[None, :])
    return T.reshape(out, (ids.shape[0], model.config.hidden_dim))


def pool_mean_batch(hidden: Tensor, mask) -> Tensor:
    """Mean over unmasked token rows, per batch element: [B, T, d] -> [B, d].

    Implemented as one constant-matrix product so it is a single tape record.
    """
    mask = np.asarray(mask)
    if hidden.data.ndim != 3:
        raise DimensionError(f"pool_mean_batch: hidden must be [B, T, d], got {hidden.data.shape}")
    b, t, d = hidden.data.shape
    if mask.shape != (b, t):
        raise DimensionError(
            f"pool_mean_batch: mask shape {mask.shape} does not match hidden {(b, t)}"
        )
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise InputError("pool_mean: at least one position must be unmasked")
    weights = np.zeros((b, b * t), dtype=hidden.data.dtype)
    for i in range(b):
        weights[i, i * t:(i + 1) * t] = mask[i] / counts[i]
    return T.matmul(Tensor(weights), T.reshape(hidden, (b * t, d)))


def pool_mean(hidden: Tensor, mask) -> Tensor:
    """Sentence embedding [d]: mean of the unmasked rows of [T, d]."""
    mask = np.asarray(mask)
    if hidden.data.ndim != 2:
        raise DimensionError(f"pool_mean: hidden must be [T, d], got {hidden.data.shape}")
    t, d = hidden.data.shape
    if mask.shape != (t,):
        raise DimensionError(f"pool_mean: mask shape {mask.shape} does not match length {t}")
    out = pool_mean_batch(T.reshape(hidden, (1, t, d)), mask[None, :])
    return T.reshape(out, (d,))
