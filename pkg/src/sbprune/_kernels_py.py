"""Numpy implementations of the hot kernels.

These are the fallback for the compiled extension in ``_kernels.pyx`` and
define the reference semantics: same signatures, same formulas.  All
functions accept float32 or float64 arrays and preserve the input dtype.

Shape conventions: ``x`` is (rows, d) with the normalized/softmaxed axis
last; gelu and the Adam update treat arrays as flat.
"""

import numpy as np
from scipy.special import erf

BACKEND = "numpy"

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(x):
    return (0.5 * x * (1.0 + erf(x * _INV_SQRT2))).astype(x.dtype, copy=False)


def gelu_bwd(x, grad_out):
    d = 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (grad_out * d).astype(x.dtype, copy=False)


def softmax_last_fwd(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_last_bwd(y, grad_out):
    inner = (grad_out * y).sum(axis=-1, keepdims=True)
    return y * (grad_out - inner)


def layer_norm_fwd(x, gain, bias, eps):
    """Returns (y, xhat, rstd); xhat and rstd feed the backward pass."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return (xhat * gain + bias).astype(x.dtype, copy=False), xhat, rstd


def layer_norm_bwd(xhat, rstd, gain, grad_out):
    gy = grad_out * gain
    m1 = gy.mean(axis=-1, keepdims=True)
    m2 = (gy * xhat).mean(axis=-1, keepdims=True)
    grad_x = rstd * (gy - m1 - xhat * m2)
    grad_gain = (grad_out * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    grad_bias = grad_out.reshape(-1, xhat.shape[-1]).sum(axis=0)
    return grad_x.astype(xhat.dtype, copy=False), grad_gain, grad_bias


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    """In-place Adam step with bias correction; ``step`` is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
