import math

import numpy as np
import pytest

from sbprune import tensor as T
from sbprune.data import NliExample, StsExample, Vocab, build_vocab, gen_synthetic, tokenize
from sbprune.encoder import EncoderConfig, encode, encoder_init, pool_mean
from sbprune.errors import ConfigError, DimensionError, InputError
from sbprune.pruning import plan_prune, prune_model
from sbprune.tensor import Tape, Tensor
from sbprune.training import (
    NliHead,
    TrainConfig,
    clone_model,
    nli_head_init,
    nli_loss,
    sts_loss,
    train_phase,
    two_phase_pipeline,
)

from helpers import clone_model_as, numeric_grad, rel_err


def small_model(seed=0, vocab_tokens=None, **kw):
    tokens = vocab_tokens or [f"w{i}" for i in range(8)]
    vocab = Vocab(tokens)
    defaults = dict(vocab_size=len(vocab), hidden_dim=8, num_layers=1,
                    num_heads=2, ffn_dim=8, max_seq_len=4, seed=seed)
    defaults.update(kw)
    model = encoder_init(EncoderConfig(**defaults))
    model.vocab = vocab
    return model


def tok(model, text):
    return tokenize(text, model.vocab, model.config.max_seq_len)


def params_bitwise_equal(a, b):
    for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
        if na != nb or ta.data.tobytes() != tb.data.tobytes():
            return False
    return True


# nli_loss


def test_nli_loss_zero_head_is_ln3():
    model = small_model()
    d = model.config.hidden_dim
    head = NliHead(weight=Tensor(np.zeros((3, 3 * d), dtype=np.float32), requires_grad=True),
                   bias=Tensor(np.zeros(3, dtype=np.float32), requires_grad=True))
    for label in (0, 1, 2):
        loss = nli_loss(model, head, tok(model, "w0 w1"), tok(model, "w2"), label)
        assert loss.item() == pytest.approx(math.log(3.0), abs=1e-6)


def test_nli_loss_identical_pair_ignores_abs_diff_columns():
    model = small_model(seed=3)
    d = model.config.hidden_dim
    rng = np.random.default_rng(0)
    base = rng.normal(0, 0.1, size=(3, 3 * d)).astype(np.float32)
    other = base.copy()
    other[:, 2 * d:] = rng.normal(0, 5.0, size=(3, d))  # only the |u-v| block differs
    bias = Tensor(np.zeros(3, dtype=np.float32))
    h1 = NliHead(weight=Tensor(base), bias=bias)
    h2 = NliHead(weight=Tensor(other), bias=bias)
    s = tok(model, "w1 w2 w3")
    l1 = nli_loss(model, h1, s, s, 1).item()
    l2 = nli_loss(model, h2, s, s, 1).item()
    assert l1 == l2  # |u-v| is exactly zero, so those columns never contribute


def test_nli_loss_label_validation():
    model = small_model()
    head = nli_head_init(model.config.hidden_dim, np.random.default_rng(0))
    with pytest.raises(InputError):
        nli_loss(model, head, tok(model, "w0"), tok(model, "w1"), 3)
    with pytest.raises(InputError):
        nli_loss(model, head, tok(model, "w0"), tok(model, "w1"), -1)


def test_nli_head_gradient_formula_and_fd():
    model = clone_model_as(small_model(seed=5), np.float64)
    model.vocab = Vocab([f"w{i}" for i in range(8)])
    d = model.config.hidden_dim
    rng = np.random.default_rng(7)
    head = NliHead(weight=Tensor(rng.normal(0, 0.2, size=(3, 3 * d)), requires_grad=True),
                   bias=Tensor(rng.normal(0, 0.2, size=(3,)), requires_grad=True))
    prem, hyp, label = tok(model, "w1 w2 w3 w4"), tok(model, "w5 w6"), 2

    with Tape() as tape:
        loss = nli_loss(model, head, prem, hyp, label)
        tape.backward(loss)
    got = head.weight.grad.copy()

    # closed form: (softmax(logits) - onehot) outer concat(u, v, |u-v|)
    u = pool_mean(encode(model, prem[0], prem[1]), prem[1]).data
    v = pool_mean(encode(model, hyp[0], hyp[1]), hyp[1]).data
    feats = np.concatenate([u, v, np.abs(u - v)])
    logits = head.weight.data @ feats + head.bias.data
    p = np.exp(logits - logits.max())
    p /= p.sum()
    p[label] -= 1.0
    want = np.outer(p, feats)
    assert rel_err(got, want) < 1e-12

    def f(w):
        head_f = NliHead(weight=Tensor(w.reshape(3, 3 * d)), bias=Tensor(head.bias.data))
        return float(nli_loss(model, head_f, prem, hyp, label).item())

    fd = numeric_grad(f, head.weight.data.ravel()).reshape(3, 3 * d)
    assert rel_err(got, fd) < 1e-6


# sts_loss


def test_sts_loss_identical_sentences_gold5_near_zero():
    model = small_model(seed=2)
    s = tok(model, "w1 w2 w3")
    loss = sts_loss(model, s, s, 5.0)
    assert 0.0 <= loss.item() < 1e-9


def test_sts_loss_orthogonal_algebra():
    # the underlying objective: cosine 0 against gold 2.5 scores 0.25
    u = Tensor(np.array([[1.0, 0.0]]))
    v = Tensor(np.array([[0.0, 1.0]]))
    loss = T.mse(T.cosine_rows(u, v), Tensor(np.array([2.5 / 5.0])))
    assert loss.item() == pytest.approx(0.25, rel=1e-12)


def test_sts_loss_matches_forward_algebra():
    model = small_model(seed=9)
    s1, s2 = tok(model, "w1 w2"), tok(model, "w3 w4 w5")
    u = pool_mean(encode(model, s1[0], s1[1]), s1[1]).data.astype(np.float64)
    v = pool_mean(encode(model, s2[0], s2[1]), s2[1]).data.astype(np.float64)
    cos = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v) + 1e-8))
    want = (cos - 3.0 / 5.0) ** 2
    assert sts_loss(model, s1, s2, 3.0).item() == pytest.approx(want, rel=1e-5)


def test_sts_loss_gold_validation():
    model = small_model()
    s = tok(model, "w0")
    for bad in (-0.1, 5.4, float("nan")):
        with pytest.raises(InputError):
            sts_loss(model, s, s, bad)


def test_sts_gradient_matches_finite_differences():
    model = clone_model_as(small_model(seed=11), np.float64)
    model.vocab = Vocab([f"w{i}" for i in range(8)])
    model.set_requires_grad(True)
    s1, s2 = tok(model, "w1 w2 w3"), tok(model, "w4 w5")

    with Tape() as tape:
        loss = sts_loss(model, s1, s2, 2.0)
        tape.backward(loss)

    rng = np.random.default_rng(0)
    for t in (model.token_embedding, model.layers[0].w1, model.layers[0].attn_gain):
        flat = t.data.ravel()
        coords = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for c in coords:
            orig = flat[c]
            h = 1e-5
            flat[c] = orig + h
            fp = float(sts_loss(model, s1, s2, 2.0).item())
            flat[c] = orig - h
            fm = float(sts_loss(model, s1, s2, 2.0).item())
            flat[c] = orig
            fd = (fp - fm) / (2 * h)
            an = t.grad.ravel()[c]
            assert abs(an - fd) <= 1e-4 * max(1.0, abs(fd)), (an, fd)


# head plumbing


def test_head_width_tracks_hidden_dim_not_layers():
    model = small_model(num_layers=4)
    head = nli_head_init(model.config.hidden_dim, np.random.default_rng(0))
    pruned = prune_model(model, plan_prune(4, "top", 2))
    # same d, fewer layers: the head still fits
    loss = nli_loss(pruned, head, tok(model, "w0 w1"), tok(model, "w2"), 0)
    assert loss.item() > 0
    with pytest.raises(DimensionError):
        nli_loss(model, NliHead(weight=Tensor(np.zeros((3, 5))),
                                bias=Tensor(np.zeros(3))),
                 tok(model, "w0"), tok(model, "w1"), 0)


def test_train_config_validation():
    TrainConfig(epochs=1, learning_rate=0.0)  # zero lr is a valid no-op run
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, learning_rate=-1e-3)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, max_seq_len=0)


# train_phase


def nli_set(model, n=8):
    words = [t for t in model.vocab.to_list()[2:]]
    out = []
    for i in range(n):
        prem = " ".join(words[(i + j) % len(words)] for j in range(3))
        hyp = words[i % len(words)]
        out.append(NliExample(premise=prem, hypothesis=hyp, label=i % 3))
    return out


def sts_set(model, n=8):
    words = [t for t in model.vocab.to_list()[2:]]
    out = []
    for i in range(n):
        s1 = " ".join(words[(i + j) % len(words)] for j in range(3))
        s2 = " ".join(words[(i + j) % len(words)] for j in range(3 - (i % 3)))
        out.append(StsExample(sentence1=s1, sentence2=s2, score=float(5 - i % 6)))
    return out


def test_train_phase_zero_lr_is_bitwise_noop():
    model = small_model(seed=1)
    cfg = TrainConfig(epochs=2, batch_size=4, learning_rate=0.0, seed=3)
    out, head, hist = train_phase(model, None, nli_set(model), "nli", cfg)
    assert params_bitwise_equal(model, out)
    assert head is not None
    assert len(hist.step_losses) == 2 * 2  # 8 examples / batch 4, 2 epochs
    assert all(x >= 0.0 for x in hist.step_losses)


def test_train_phase_does_not_mutate_input():
    model = small_model(seed=4)
    before = [t.data.copy() for _, t in model.named_parameters()]
    cfg = TrainConfig(epochs=1, batch_size=4, learning_rate=1e-2, seed=0)
    out, _, _ = train_phase(model, None, nli_set(model), "nli", cfg)
    assert not params_bitwise_equal(model, out)  # it did train
    for (_, t), old in zip(model.named_parameters(), before):
        assert np.array_equal(t.data, old)


def test_train_phase_determinism_and_seed_sensitivity():
    model = small_model(seed=6)
    data = nli_set(model)
    cfg = TrainConfig(epochs=2, batch_size=4, learning_rate=1e-3, seed=11)
    out1, h1, hist1 = train_phase(model, None, data, "nli", cfg)
    out2, h2, hist2 = train_phase(model, None, data, "nli", cfg)
    assert params_bitwise_equal(out1, out2)
    assert h1.weight.data.tobytes() == h2.weight.data.tobytes()
    assert hist1.step_losses == hist2.step_losses
    assert hist1.epoch_mean_losses == hist2.epoch_mean_losses

    out3, _, hist3 = train_phase(model, None, data, "nli",
                                 TrainConfig(epochs=2, batch_size=4,
                                             learning_rate=1e-3, seed=12))
    assert hist3.step_losses != hist1.step_losses


def test_train_phase_first_step_loss_matches_per_example_op():
    model = small_model(seed=8)
    data = nli_set(model)
    head = nli_head_init(model.config.hidden_dim, np.random.default_rng(5))
    cfg = TrainConfig(epochs=1, batch_size=1, learning_rate=1e-3, seed=0, shuffle=False)
    _, _, hist = train_phase(model, head, data, "nli", cfg)
    ex = data[0]
    direct = nli_loss(model, head, tok(model, ex.premise), tok(model, ex.hypothesis),
                      ex.label)
    assert hist.step_losses[0] == float(direct.item())


def test_train_phase_batch_loss_is_mean_of_examples():
    model = small_model(seed=8)
    data = nli_set(model, n=4)
    head = nli_head_init(model.config.hidden_dim, np.random.default_rng(5))
    cfg = TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3, seed=0, shuffle=False)
    _, _, hist = train_phase(model, head, data, "nli", cfg)
    per = [nli_loss(model, head, tok(model, ex.premise), tok(model, ex.hypothesis),
                    ex.label).item() for ex in data]
    assert hist.step_losses[0] == pytest.approx(float(np.mean(per)), rel=1e-5)


def test_train_phase_descent_on_one_example():
    # one large-lr step on a single pair should reduce that pair's loss for
    # nearly every init seed
    wins = 0
    trials = 100
    data = [NliExample(premise="w1 w2 w3", hypothesis="w4", label=1)]
    for seed in range(trials):
        model = small_model(seed=seed)
        cfg = TrainConfig(epochs=1, batch_size=1, learning_rate=0.5, seed=seed)
        out, head, hist = train_phase(model, None, data, "nli", cfg)
        before = hist.step_losses[0]
        after = nli_loss(out, head, tok(out, data[0].premise),
                         tok(out, data[0].hypothesis), data[0].label).item()
        if after < before:
            wins += 1
    assert wins >= 95, f"descent held in only {wins}/{trials} seeds"


def test_train_phase_validation_errors():
    model = small_model()
    cfg = TrainConfig(epochs=1)
    with pytest.raises(InputError, match="empty"):
        train_phase(model, None, [], "nli", cfg)
    with pytest.raises(InputError):
        train_phase(model, None, nli_set(model), "sts", cfg)  # kind mismatch
    with pytest.raises(InputError):
        train_phase(model, None, sts_set(model), "nli", cfg)
    with pytest.raises(InputError):
        train_phase(model, None, nli_set(model), "classify", cfg)
    head = nli_head_init(8, np.random.default_rng(0))
    with pytest.raises(InputError, match="no classifier head"):
        train_phase(model, head, sts_set(model), "sts", cfg)
    bare = small_model()
    bare.vocab = None
    with pytest.raises(InputError, match="vocabulary"):
        train_phase(bare, None, nli_set(model), "nli", cfg)
    with pytest.raises(InputError, match="exceeds"):
        train_phase(model, None, nli_set(model), "nli",
                    TrainConfig(epochs=1, max_seq_len=99))


def test_train_phase_sts_runs_and_descends_in_aggregate():
    model = small_model(seed=3)
    data = sts_set(model, n=12)
    cfg = TrainConfig(epochs=4, batch_size=4, learning_rate=5e-3, seed=1)
    out, none, hist = train_phase(model, None, data, "sts", cfg)
    assert none is None
    assert len(hist.epoch_mean_losses) == 4
    assert hist.epoch_mean_losses[-1] < hist.epoch_mean_losses[0]


def test_history_shape_consistency():
    model = small_model(seed=1)
    cfg = TrainConfig(epochs=3, batch_size=3, learning_rate=1e-3, seed=2)
    _, _, hist = train_phase(model, None, nli_set(model, n=8), "nli", cfg)
    steps_per_epoch = math.ceil(8 / 3)
    assert len(hist.step_losses) == 3 * steps_per_epoch
    assert len(hist.epoch_mean_losses) == 3
    assert len(hist.epoch_seconds) == 3
    for e in range(3):
        chunk = hist.step_losses[e * steps_per_epoch:(e + 1) * steps_per_epoch]
        assert hist.epoch_mean_losses[e] == pytest.approx(sum(chunk) / len(chunk))
    d = hist.to_dict(include_timing=False)
    assert "epoch_seconds" not in d
    assert hist.to_dict()["epoch_seconds"] == hist.epoch_seconds


# two_phase_pipeline


def test_pipeline_zero_lr_leaves_model_unchanged():
    model = small_model(seed=5)
    cfg0 = TrainConfig(epochs=1, batch_size=4, learning_rate=0.0, seed=9)
    out, report = two_phase_pipeline(model, nli_set(model), sts_set(model), cfg0, cfg0)
    assert params_bitwise_equal(model, out)
    assert report.nli_history.objective == "nli"
    assert report.sts_history.objective == "sts"


def test_pipeline_equals_manual_composition():
    model = small_model(seed=7)
    nli, sts = nli_set(model), sts_set(model)
    cfg_nli = TrainConfig(epochs=2, batch_size=4, learning_rate=1e-3, seed=21)
    cfg_sts = TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3, seed=22)
    piped, report = two_phase_pipeline(model, nli, sts, cfg_nli, cfg_sts)

    m1, _, h1 = train_phase(model, None, nli, "nli", cfg_nli)
    m2, _, h2 = train_phase(m1, None, sts, "sts", cfg_sts)
    assert params_bitwise_equal(piped, m2)
    assert report.nli_history.step_losses == h1.step_losses
    assert report.sts_history.step_losses == h2.step_losses


def test_pipeline_on_synthetic_corpus_reduces_sts_loss():
    nli = gen_synthetic("nli", 120, seed=30, vocab_size=48, num_topics=3)
    sts = gen_synthetic("sts", 120, seed=31, vocab_size=48, num_topics=3)
    texts = [ex.premise for ex in nli] + [ex.hypothesis for ex in nli] + \
            [ex.sentence1 for ex in sts] + [ex.sentence2 for ex in sts]
    vocab = build_vocab(texts, 50)
    model = encoder_init(EncoderConfig(vocab_size=len(vocab), hidden_dim=16,
                                       num_layers=2, num_heads=2, ffn_dim=24,
                                       max_seq_len=10, seed=0))
    model.vocab = vocab
    cfg_nli = TrainConfig(epochs=1, batch_size=16, learning_rate=1e-3, seed=1)
    cfg_sts = TrainConfig(epochs=3, batch_size=16, learning_rate=1e-3, seed=2)
    _, report = two_phase_pipeline(model, nli, sts, cfg_nli, cfg_sts)
    h = report.sts_history.epoch_mean_losses
    assert h[-1] < h[0]


def test_clone_model_is_deep_and_bitwise():
    model = small_model(seed=13)
    dup = clone_model(model)
    assert params_bitwise_equal(model, dup)
    dup.layers[0].wq.data[...] += 1
    assert not params_bitwise_equal(model, dup)
    assert dup.vocab is model.vocab
