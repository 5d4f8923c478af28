"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays (float32 by default; float64 for sharp gradient
checking).  Operations record themselves on the innermost active
``Tape``; ``Tape.backward`` replays the records in reverse and accumulates
gradients into every ``requires_grad`` tensor that the loss depends on.
With no tape active the same functions are plain numpy math, which is what
evaluation code uses.

Shapes are explicit everywhere.  The only broadcasting the differentiable
ops perform is bias addition over rows (``add_bias``); ``matmul`` accepts
either two 2-d operands or two stacked operands with identical leading
dimensions.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .backend import kernels
from .errors import DimensionError, InputError, NumericError, UsageError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense array plus optional gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


# A record is (output, inputs, backward) where backward maps the output
# gradient to one gradient (or None) per input.
_BackwardFn = Callable[[np.ndarray], tuple]


class Tape:
    """Ordered log of operations; forward order is topological by construction."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], _BackwardFn]] = []
        self._output_ids: set[int] = set()
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and push gradients back through the log.

        Each record is visited exactly once, in reverse; a tensor used by
        several operations accumulates one contribution per use.
        """
        if self._consumed:
            raise UsageError("tape already consumed by a previous backward()")
        if loss.data.shape != ():
            raise UsageError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
        if id(loss) not in self._output_ids:
            raise UsageError("loss is not an output recorded on this tape")
        self._consumed = True
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for out, inputs, backward_fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = g.astype(t.data.dtype, copy=True)
                else:
                    t.grad = t.grad + g


_TAPES: list[Tape] = []


def _active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def backward(loss: Tensor) -> None:
    """``Tape.backward`` on the innermost active tape."""
    tape = _active_tape()
    if tape is None:
        raise UsageError("backward() called with no active tape")
    tape.backward(loss)


def _all_finite(a: np.ndarray) -> bool:
    # min/max both propagate NaN and expose either infinity, so two
    # allocation-free passes replace isfinite's temporary bool array
    if a.size == 0:
        return True
    return bool(np.isfinite(a.min())) and bool(np.isfinite(a.max()))


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: _BackwardFn) -> Tensor:
    if not _all_finite(data):
        raise NumericError("operation produced a non-finite value")
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.records.append((out, inputs, backward_fn))
        tape._output_ids.add(id(out))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: operand shapes differ: {a.data.shape} vs {b.data.shape}")
    if a.data.dtype != b.data.dtype:
        raise UsageError(f"{op}: operand dtypes differ: {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d or stacked with identical leading dimensions."""
    A, B = a.data, b.data
    if A.ndim < 2 or B.ndim < 2 or A.ndim != B.ndim:
        raise DimensionError(f"matmul: need equal-rank operands of rank >= 2: {A.shape} @ {B.shape}")
    if A.shape[-1] != B.shape[-2] or A.shape[:-2] != B.shape[:-2]:
        raise DimensionError(f"matmul: incompatible shapes: {A.shape} @ {B.shape}")

    def backward_fn(g):
        ga = g @ B.swapaxes(-1, -2) if a.requires_grad else None
        gb = A.swapaxes(-1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _result(A @ B, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    A, B = a.data, b.data
    with np.errstate(over="ignore"):
        out = A * B
    return _result(out, (a, b), lambda g: (g * B, g * A))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    A, B = a.data, b.data
    # bad values surface as NumericError from _result, not as numpy warnings
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = A / B
    return _result(out, (a, b), lambda g: (g / B, -g * A / (B * B)))


def absolute(x: Tensor) -> Tensor:
    """|x|, with subgradient 0 at 0."""
    s = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * s,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, exact erf form."""
    X = x.data
    return _result(kernels.gelu_fwd(X), (x,), lambda g: (kernels.gelu_bwd(X, g),))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return _result(x.data + float(c), (x,), lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., d] + b[d], the one sanctioned broadcast."""
    d = x.data.shape[-1]
    if b.data.shape != (d,):
        raise DimensionError(f"add_bias: bias shape {b.data.shape} does not match last dim {d}")

    def backward_fn(g):
        gb = g.reshape(-1, d).sum(axis=0) if b.requires_grad else None
        return g, gb

    return _result(x.data + b.data, (x, b), backward_fn)


def add_const(x: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant array (no gradient for c); result must keep x's shape."""
    out = x.data + np.asarray(c, dtype=x.data.dtype)
    if out.shape != x.data.shape:
        raise DimensionError(f"add_const: constant of shape {np.shape(c)} changes shape {x.data.shape}")
    return _result(out, (x,), lambda g: (g,))


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        y = np.sqrt(x.data)
    return _result(y, (x,), lambda g: (g * 0.5 / y,))


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape, dt = x.data.shape, x.data.dtype
    return _result(x.data.sum(), (x,), lambda g: (np.full(shape, g, dtype=dt),))


def sum_last(x: Tensor) -> Tensor:
    """Sum over the last axis (drops it)."""
    shape = x.data.shape
    return _result(
        x.data.sum(axis=-1),
        (x,),
        lambda g: (np.broadcast_to(g[..., None], shape).copy(),),
    )


# ---------------------------------------------------------------------------
# structure


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (g.transpose(inverse),),
    )


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    widths = [p.data.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]
    flags = [p.requires_grad for p in parts]

    def backward_fn(g):
        pieces = np.split(g, splits, axis=-1)
        return tuple(p if f else None for p, f in zip(pieces, flags))

    return _result(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), backward_fn)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Rows ``table[ids]``; backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise DimensionError(f"gather_rows: ids must be 1-d, got shape {ids.shape}")
    n = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise InputError(f"gather_rows: id out of range for table with {n} rows")

    def backward_fn(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        return (buf,)

    return _result(table.data[ids], (table,), backward_fn)


# ---------------------------------------------------------------------------
# normalization


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by per-row max subtraction."""
    y = kernels.softmax_last_fwd(x.data)
    return _result(y, (x,), lambda g: (kernels.softmax_last_bwd(y, g),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    """Normalize each last-axis vector to mean 0 / variance 1, then affine."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError(
            f"layer_norm: gain {gain.data.shape} / bias {bias.data.shape} do not match last dim {d}"
        )
    if eps <= 0:
        raise InputError(f"layer_norm: eps must be positive, got {eps}")
    y, xhat, rstd = kernels.layer_norm_fwd(x.data, gain.data, bias.data, eps)

    def backward_fn(g):
        gx, ggain, gbias = kernels.layer_norm_bwd(xhat, rstd, gain.data, g)
        return gx, ggain, gbias

    return _result(y, (x, gain, bias), backward_fn)


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood with log-sum-exp stabilization.

    ``logits`` is [n_classes] with an int label, or [batch, n_classes] with
    one label per row; either way the result is a scalar.
    """
    L = logits.data
    single = L.ndim == 1
    L2 = L[None, :] if single else L
    if L2.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be 1-d or 2-d, got shape {L.shape}")
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = L2.shape
    if lab.shape != (n,):
        raise DimensionError(f"cross_entropy: {n} logit rows but {lab.shape} labels")
    if lab.size and (lab.min() < 0 or lab.max() >= c):
        raise InputError(f"cross_entropy: label out of range [0, {c})")

    m = L2.max(axis=1, keepdims=True)
    s = L2 - m
    lse = np.log(np.exp(s).sum(axis=1))
    losses = lse - s[np.arange(n), lab]
    loss = losses.mean(dtype=L.dtype)

    def backward_fn(g):
        p = kernels.softmax_last_fwd(L2).copy()
        p[np.arange(n), lab] -= 1.0
        grad = p * (g / n)
        return (grad[0] if single else grad,)

    return _result(np.asarray(loss, dtype=L.dtype), (logits,), backward_fn)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    _same_shape(pred, target, "mse")
    diff = pred.data - target.data
    n = diff.size
    loss = np.asarray((diff * diff).mean(dtype=pred.data.dtype), dtype=pred.data.dtype)

    def backward_fn(g):
        base = g * 2.0 * diff / n
        return base, -base if target.requires_grad else None

    return _result(loss, (pred, target), backward_fn)


def cosine_rows(u: Tensor, v: Tensor, eps: float = 1e-8) -> Tensor:
    """Row-wise cosine similarity of two [n, d] tensors, eps in the denominator."""
    _same_shape(u, v, "cosine_rows")
    dot = sum_last(mul(u, v))
    nu = sqrt(sum_last(mul(u, u)))
    nv = sqrt(sum_last(mul(v, v)))
    return div(dot, add_scalar(mul(nu, nv), eps))


# ---------------------------------------------------------------------------
# optimization


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).

    ``step`` consumes the gradients of every registered parameter, applies
    the update in place, clears the gradients, and bumps ``step_count``.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise InputError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise UsageError(f"optimizer step: parameter {i} has no gradient")
        self.step_count += 1
        for p, m, v in zip(self.params, self.m, self.v):
            kernels.adam_update(p.data, p.grad, m, v, self.lr,
                                self.beta1, self.beta2, self.eps, self.step_count)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
