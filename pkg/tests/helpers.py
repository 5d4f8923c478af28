"""Shared test utilities, mainly the finite-difference gradient oracle.

The oracle is intentionally independent of the tape: it re-runs the forward
function as plain numpy (no tape active, requires_grad off) and perturbs
one element at a time with central differences.
"""

import numpy as np

from sbprune.tensor import Tape, Tensor


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar-valued ``f`` at ``x`` (float64)."""
    x = x.astype(np.float64, copy=True)
    g = np.zeros_like(x)
    flat, gflat = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """norm(a - b) / max(norm(a), norm(b)), zero-safe."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(build, arrays, tol: float = 1e-4, h: float = 1e-5, dtype=np.float64):
    """Compare tape gradients of ``build(*tensors) -> scalar`` against the oracle.

    Analytic gradients run in ``dtype`` (float32 checks use a looser tol);
    the oracle always differentiates the float64 forward.  Returns the worst
    relative error over all inputs so callers can report it.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.astype(dtype), requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build(*tensors)
        tape.backward(loss)

    worst = 0.0
    for i in range(len(arrays)):
        def f(xi, i=i):
            ts = [Tensor(a) for a in arrays]
            ts[i] = Tensor(xi)
            return float(build(*ts).data)

        ng = numeric_grad(f, arrays[i], h)
        ag = tensors[i].grad
        assert ag is not None, f"input {i}: no gradient reached a requires_grad leaf"
        e = rel_err(ag, ng)
        assert e <= tol, f"input {i}: analytic vs numeric rel err {e:.3e} > {tol}"
        worst = max(worst, e)
    return worst


def clone_model_as(model, dtype):
    """Value-identical encoder copy in another dtype, gradients off."""
    from sbprune.encoder import EncoderModel, LayerParams

    def c(t):
        return Tensor(t.data.astype(dtype))

    layers = [
        LayerParams(**{attr: c(getattr(layer, attr)) for _, attr in LayerParams.NAMED})
        for layer in model.layers
    ]
    return EncoderModel(config=model.config, token_embedding=c(model.token_embedding),
                        position_embedding=c(model.position_embedding), layers=layers,
                        vocab=model.vocab)


def encoder_scalar_loss(model, ids, mask, w):
    """Fixed random projection of the pooled embeddings, as a scalar."""
    from sbprune.encoder import encode_batch, pool_mean_batch
    from sbprune import tensor as T

    emb = pool_mean_batch(encode_batch(model, ids, mask), mask)
    return T.tsum(T.mul(emb, Tensor(w.astype(emb.data.dtype))))


def encoder_gradcheck(model, ids, mask, rng, n_coords=60, tol=1e-4, h=1e-5):
    """Full-model gradient check on a random subsample of coordinates.

    Analytic gradients run on ``model`` as-is (float32 or float64); the
    finite-difference side always runs on a float64 clone so the oracle is
    sharp either way.  Returns the relative error over the sample.
    """
    w = rng.normal(size=(np.asarray(ids).shape[0], model.config.hidden_dim))
    with Tape() as tape:
        loss = encoder_scalar_loss(model, ids, mask, w)
        tape.backward(loss)

    clone = clone_model_as(model, np.float64)
    params = model.named_parameters()
    cparams = clone.named_parameters()
    sizes = [t.data.size for _, t in params]
    bounds = np.cumsum(sizes)
    coords = rng.choice(bounds[-1], size=min(n_coords, int(bounds[-1])), replace=False)

    ana, num = [], []
    for c in sorted(int(c) for c in coords):
        pi = int(np.searchsorted(bounds, c, side="right"))
        off = c - (bounds[pi - 1] if pi else 0)
        name, pt = params[pi]
        flat = cparams[pi][1].data.ravel()
        orig = flat[off]
        flat[off] = orig + h
        fp = float(encoder_scalar_loss(clone, ids, mask, w).data)
        flat[off] = orig - h
        fm = float(encoder_scalar_loss(clone, ids, mask, w).data)
        flat[off] = orig
        num.append((fp - fm) / (2.0 * h))
        assert pt.grad is not None, f"{name}: no gradient"
        ana.append(float(pt.grad.ravel()[off]))

    e = rel_err(np.array(ana), np.array(num))
    assert e <= tol, f"encoder gradcheck rel err {e:.3e} > {tol}"
    return e


def make_op_cases(rng):
    """One freshly sampled gradcheck instance per differentiable op.

    Returns (name, build, arrays) triples for ``gradcheck``.  Non-scalar
    ops are reduced to a scalar through a fixed random weighting so every
    output element influences the loss.  Inputs are sampled away from
    kinks (|x| for absolute, sqrt near 0, small divisors) where finite
    differences are unreliable.
    """
    from sbprune import tensor as T

    def away_from_zero(shape, margin=0.2):
        a = rng.normal(size=shape)
        return a + np.sign(a) * margin

    def weighted(op):
        w = {}

        def build(*ts):
            out = op(*ts)
            key = out.data.shape
            if key not in w:
                w[key] = rng.normal(size=key)
            return T.tsum(T.mul(out, Tensor(w[key].astype(ts[0].data.dtype))))

        return build

    cases = [
        ("matmul_2d", weighted(T.matmul),
         [rng.normal(size=(3, 4)), rng.normal(size=(4, 5))]),
        ("matmul_stacked", weighted(T.matmul),
         [rng.normal(size=(2, 2, 3, 4)), rng.normal(size=(2, 2, 4, 5))]),
        ("add", weighted(T.add), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("sub", weighted(T.sub), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("mul", weighted(T.mul), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("div", weighted(T.div), [rng.normal(size=(3, 4)), away_from_zero((3, 4), 0.5)]),
        ("absolute", weighted(T.absolute), [away_from_zero((3, 4))]),
        ("tanh", weighted(T.tanh), [rng.normal(size=(3, 4))]),
        ("gelu", weighted(T.gelu), [rng.normal(size=(3, 4))]),
        ("scale", weighted(lambda t: T.scale(t, 1.7)), [rng.normal(size=(3, 4))]),
        ("add_scalar", weighted(lambda t: T.add_scalar(t, 0.3)), [rng.normal(size=(3, 4))]),
        ("add_bias", weighted(T.add_bias), [rng.normal(size=(3, 4)), rng.normal(size=4)]),
        ("add_const", weighted(lambda t, c=rng.normal(size=4): T.add_const(t, c)),
         [rng.normal(size=(3, 4))]),
        ("sqrt", weighted(T.sqrt), [rng.uniform(0.5, 2.0, size=(3, 4))]),
        ("tsum", T.tsum, [rng.normal(size=(3, 4))]),
        ("sum_last", weighted(T.sum_last), [rng.normal(size=(2, 3, 4))]),
        ("reshape", weighted(lambda t: T.reshape(t, (2, 6))), [rng.normal(size=(3, 4))]),
        ("transpose", weighted(lambda t: T.transpose(t, (2, 0, 1))),
         [rng.normal(size=(2, 3, 4))]),
        ("concat_last", weighted(lambda *ts: T.concat_last(ts)),
         [rng.normal(size=(3, 2)), rng.normal(size=(3, 3)), rng.normal(size=(3, 4))]),
        ("gather_rows", weighted(lambda t: T.gather_rows(t, np.array([0, 3, 3, 5]))),
         [rng.normal(size=(6, 4))]),
        ("softmax_rows", weighted(T.softmax_rows), [rng.normal(size=(3, 5))]),
        ("layer_norm", weighted(lambda x, g, b: T.layer_norm(x, g, b, 1e-5)),
         [rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=6)]),
        ("cross_entropy_batch",
         lambda t, lab=rng.integers(0, 3, size=4): T.cross_entropy(t, lab),
         [rng.normal(size=(4, 3))]),
        ("cross_entropy_single", lambda t: T.cross_entropy(t, 2), [rng.normal(size=5)]),
        ("mse", T.mse, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("cosine_rows", weighted(T.cosine_rows),
         [away_from_zero((3, 5)), away_from_zero((3, 5))]),
    ]
    return cases
