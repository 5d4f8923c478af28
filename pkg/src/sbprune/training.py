"""Two-phase siamese fine-tuning.

Phase 1 trains a 3-way classifier on premise/hypothesis pairs from the
concatenated features (u, v, |u-v|); phase 2 drops that head and regresses
cosine(u, v) onto gold/5 similarity targets.  Both encoder passes inside a
loss share one parameter set.  Training never mutates its input model: it
clones, trains the clone, and returns it, so one base model can feed many
runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .data import NliExample, StsExample, tokenize
from .encoder import EncoderModel, LayerParams, encode_batch, pool_mean_batch
from .errors import ConfigError, DimensionError, InputError
from .tensor import Adam, Tape, Tensor

_HEAD_STD = 0.02


@dataclass
class NliHead:
    weight: Tensor  # [3, 3d]
    bias: Tensor    # [3]

    def parameters(self):
        return [self.weight, self.bias]


def nli_head_init(hidden_dim: int, rng: np.random.Generator,
                  dtype=np.float32) -> NliHead:
    w = rng.normal(0.0, _HEAD_STD, size=(3, 3 * hidden_dim)).astype(dtype)
    b = rng.normal(0.0, _HEAD_STD, size=(3,)).astype(dtype)
    return NliHead(weight=Tensor(w, requires_grad=True),
                   bias=Tensor(b, requires_grad=True))


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    max_seq_len: Optional[int] = None  # None: use the model's own limit
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        # zero is allowed so a no-op run can serve as a bitwise baseline
        if self.learning_rate < 0:
            raise ConfigError(
                f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.max_seq_len is not None and self.max_seq_len < 1:
            raise ConfigError(f"max_seq_len must be positive, got {self.max_seq_len}")


@dataclass
class TrainHistory:
    objective: str
    step_losses: list = field(default_factory=list)
    epoch_mean_losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "objective": self.objective,
            "step_losses": [float(x) for x in self.step_losses],
            "epoch_mean_losses": [float(x) for x in self.epoch_mean_losses],
        }
        if include_timing:
            d["epoch_seconds"] = [float(x) for x in self.epoch_seconds]
        return d


def clone_model(model: EncoderModel) -> EncoderModel:
    """Independent copy with identical bits; gradients not carried over."""
    def cp(t):
        return Tensor(np.copy(t.data), requires_grad=t.requires_grad)

    layers = [LayerParams(**{a: cp(getattr(layer, a)) for _, a in LayerParams.NAMED})
              for layer in model.layers]
    return EncoderModel(config=model.config,
                        token_embedding=cp(model.token_embedding),
                        position_embedding=cp(model.position_embedding),
                        layers=layers, vocab=model.vocab)


def clone_head(head: NliHead) -> NliHead:
    return NliHead(weight=Tensor(np.copy(head.weight.data), requires_grad=True),
                   bias=Tensor(np.copy(head.bias.data), requires_grad=True))


def _width(mask: np.ndarray) -> int:
    """Last column holding a real token, plus one; at least 1.

    Columns past that are padding in every row, and padding is inert: masked
    as attention keys, excluded from pooling, never mixed into other rows.
    Dropping them cuts the quadratic attention cost to the true lengths.
    """
    cols = np.flatnonzero(np.asarray(mask).any(axis=0))
    return int(cols[-1]) + 1 if cols.size else 1


def _embed_pairs(model, ids_a, mask_a, ids_b, mask_b):
    u = pool_mean_batch(encode_batch(model, ids_a, mask_a), mask_a)
    v = pool_mean_batch(encode_batch(model, ids_b, mask_b), mask_b)
    return u, v


def _nli_batch_loss(model, head, ids_p, mask_p, ids_h, mask_h, labels) -> Tensor:
    u, v = _embed_pairs(model, ids_p, mask_p, ids_h, mask_h)
    feats = T.concat_last([u, v, T.absolute(T.sub(u, v))])      # [B, 3d]
    logits = T.add_bias(T.matmul(feats, T.transpose(head.weight, (1, 0))), head.bias)
    return T.cross_entropy(logits, labels)


def _sts_batch_loss(model, ids_1, mask_1, ids_2, mask_2, golds) -> Tensor:
    u, v = _embed_pairs(model, ids_1, mask_1, ids_2, mask_2)
    cos = T.cosine_rows(u, v)
    target = Tensor((np.asarray(golds, dtype=np.float64) / 5.0).astype(cos.data.dtype))
    return T.mse(cos, target)


def _check_head(head: NliHead, hidden_dim: int):
    want = (3, 3 * hidden_dim)
    if head.weight.data.shape != want or head.bias.data.shape != (3,):
        raise DimensionError(
            f"head expects weight {want} and bias (3,), got "
            f"{head.weight.data.shape} and {head.bias.data.shape}")


def nli_loss(model: EncoderModel, head: NliHead, premise, hypothesis,
             label: int) -> Tensor:
    """Cross-entropy of one premise/hypothesis pair.

    ``premise`` and ``hypothesis`` are (ids, mask) pairs as produced by
    ``tokenize``.  Both encoder passes use the same model.
    """
    lab = int(label)
    if not 0 <= lab < 3:
        raise InputError(f"nli label must be 0, 1 or 2, got {label}")
    _check_head(head, model.config.hidden_dim)
    ids_p, mask_p = _row(premise)
    ids_h, mask_h = _row(hypothesis)
    return _nli_batch_loss(model, head, ids_p, mask_p, ids_h, mask_h,
                           np.array([lab]))


def sts_loss(model: EncoderModel, s1, s2, gold: float) -> Tensor:
    """Squared error between cosine(u, v) and gold/5 for one sentence pair."""
    g = float(gold)
    if not 0.0 <= g <= 5.0:
        raise InputError(f"gold score must lie in [0, 5], got {gold}")
    ids_1, mask_1 = _row(s1)
    ids_2, mask_2 = _row(s2)
    return _sts_batch_loss(model, ids_1, mask_1, ids_2, mask_2, np.array([g]))


def _row(pair):
    """One (ids, mask) sequence as a padding-trimmed batch of one."""
    ids, mask = (np.asarray(p) for p in pair)
    w = _width(mask[None, :])
    return ids[None, :w], mask[None, :w]


def _tokenize_pairs(texts_a, texts_b, vocab, max_len):
    n = len(texts_a)
    ids_a = np.empty((n, max_len), dtype=np.int64)
    mask_a = np.empty((n, max_len), dtype=np.int64)
    ids_b = np.empty((n, max_len), dtype=np.int64)
    mask_b = np.empty((n, max_len), dtype=np.int64)
    for i, (a, b) in enumerate(zip(texts_a, texts_b)):
        ids_a[i], mask_a[i] = tokenize(a, vocab, max_len)
        ids_b[i], mask_b[i] = tokenize(b, vocab, max_len)
    return ids_a, mask_a, ids_b, mask_b


def train_phase(model: EncoderModel, head: Optional[NliHead], dataset,
                objective: str, cfg: TrainConfig):
    """One fine-tuning phase; returns (trained model, head or None, history).

    The RNG seeded from cfg.seed drives, in order: head initialization (nli
    phase without a supplied head), then the per-epoch shuffles, so a run
    is reproducible from (seed, dataset, cfg) alone.
    """
    if objective not in ("nli", "sts"):
        raise InputError(f"objective must be 'nli' or 'sts', got {objective!r}")
    if len(dataset) == 0:
        raise InputError("dataset is empty")
    if model.vocab is None:
        raise InputError("model has no vocabulary; tokenization is impossible")
    want = NliExample if objective == "nli" else StsExample
    for i, ex in enumerate(dataset):
        if not isinstance(ex, want):
            raise InputError(
                f"example {i} is {type(ex).__name__}, expected {want.__name__} "
                f"for the {objective} objective")

    max_len = cfg.max_seq_len if cfg.max_seq_len is not None else model.config.max_seq_len
    if max_len > model.config.max_seq_len:
        raise InputError(
            f"max_seq_len override {max_len} exceeds the model limit "
            f"{model.config.max_seq_len}")

    rng = np.random.default_rng(cfg.seed)
    model = clone_model(model)
    model.set_requires_grad(True)
    if objective == "nli":
        if head is None:
            head = nli_head_init(model.config.hidden_dim, rng,
                                 dtype=model.token_embedding.data.dtype)
        else:
            _check_head(head, model.config.hidden_dim)
            head = clone_head(head)
        params = model.parameters() + head.parameters()
    else:
        if head is not None:
            raise InputError("the sts objective takes no classifier head")
        params = model.parameters()

    if objective == "nli":
        ids_a, mask_a, ids_b, mask_b = _tokenize_pairs(
            [ex.premise for ex in dataset], [ex.hypothesis for ex in dataset],
            model.vocab, max_len)
        targets = np.array([ex.label for ex in dataset], dtype=np.int64)
        if targets.size and (targets.min() < 0 or targets.max() > 2):
            raise InputError("nli labels must lie in {0, 1, 2}")
    else:
        ids_a, mask_a, ids_b, mask_b = _tokenize_pairs(
            [ex.sentence1 for ex in dataset], [ex.sentence2 for ex in dataset],
            model.vocab, max_len)
        targets = np.array([ex.score for ex in dataset], dtype=np.float64)
        if targets.size and (targets.min() < 0.0 or targets.max() > 5.0):
            raise InputError("gold scores must lie in [0, 5]")

    n = len(dataset)
    opt = Adam(params, lr=cfg.learning_rate)
    history = TrainHistory(objective=objective)
    order = np.arange(n)
    for _ in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.shuffle:
            order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            ba, ma = ids_a[idx], mask_a[idx]
            bb, mb = ids_b[idx], mask_b[idx]
            wa, wb = _width(ma), _width(mb)
            with Tape() as tape:
                if objective == "nli":
                    loss = _nli_batch_loss(model, head,
                                           ba[:, :wa], ma[:, :wa],
                                           bb[:, :wb], mb[:, :wb], targets[idx])
                else:
                    loss = _sts_batch_loss(model,
                                           ba[:, :wa], ma[:, :wa],
                                           bb[:, :wb], mb[:, :wb], targets[idx])
                tape.backward(loss)
            opt.step()
            epoch_losses.append(float(loss.item()))
        history.step_losses.extend(epoch_losses)
        history.epoch_mean_losses.append(sum(epoch_losses) / len(epoch_losses))
        history.epoch_seconds.append(time.perf_counter() - t0)
    return model, (head if objective == "nli" else None), history


@dataclass
class PipelineReport:
    nli_history: TrainHistory
    sts_history: TrainHistory

    def to_dict(self, include_timing: bool = True) -> dict:
        return {"nli": self.nli_history.to_dict(include_timing),
                "sts": self.sts_history.to_dict(include_timing)}


def two_phase_pipeline(model: EncoderModel, nli_dataset, sts_dataset,
                       cfg_nli: TrainConfig, cfg_sts: TrainConfig):
    """NLI phase, discard the head, then STS phase on the resulting encoder."""
    model, _head, hist_nli = train_phase(model, None, nli_dataset, "nli", cfg_nli)
    model, _none, hist_sts = train_phase(model, None, sts_dataset, "sts", cfg_sts)
    return model, PipelineReport(nli_history=hist_nli, sts_history=hist_sts)
