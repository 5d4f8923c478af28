# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``.

Same signatures and formulas; loops accumulate in double regardless of the
array dtype, so float32 results can differ from the numpy fallback by
rounding only.  Wrappers force C-contiguity before taking memoryviews; the
Adam update additionally requires its in-place operands to already be
contiguous so the write-back cannot silently land in a copy.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport erf, exp, sqrt

cnp.import_array()

BACKEND = "cython"

ctypedef fused real:
    float
    double

cdef double _INV_SQRT2 = 0.7071067811865476
cdef double _INV_SQRT_2PI = 0.3989422804014327


# ---------------------------------------------------------------------------
# typed loops

cdef void _gelu_fwd_impl(real[::1] x, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double t
    for i in range(n):
        t = <double> x[i]
        out[i] = <real> (0.5 * t * (1.0 + erf(t * _INV_SQRT2)))


cdef void _gelu_bwd_impl(real[::1] x, real[::1] g, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double t, d
    for i in range(n):
        t = <double> x[i]
        d = 0.5 * (1.0 + erf(t * _INV_SQRT2)) + t * _INV_SQRT_2PI * exp(-0.5 * t * t)
        out[i] = <real> (<double> g[i] * d)


cdef void _softmax_fwd_impl(real[:, ::1] x, real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    cdef double mx, s, e
    for i in range(n):
        mx = <double> x[i, 0]
        for j in range(1, d):
            if <double> x[i, j] > mx:
                mx = <double> x[i, j]
        s = 0.0
        for j in range(d):
            e = exp(<double> x[i, j] - mx)
            out[i, j] = <real> e
            s += e
        for j in range(d):
            out[i, j] = <real> (<double> out[i, j] / s)


cdef void _softmax_bwd_impl(real[:, ::1] y, real[:, ::1] g, real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = y.shape[0], d = y.shape[1]
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += <double> g[i, j] * <double> y[i, j]
        for j in range(d):
            out[i, j] = <real> (<double> y[i, j] * (<double> g[i, j] - inner))


cdef void _ln_fwd_impl(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps,
                       real[:, ::1] y, real[:, ::1] xhat, real[:, ::1] rstd) noexcept nogil:
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    cdef double mu, var, xc, rs
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += <double> x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            xc = <double> x[i, j] - mu
            var += xc * xc
        var /= d
        rs = 1.0 / sqrt(var + eps)
        rstd[i, 0] = <real> rs
        for j in range(d):
            xc = (<double> x[i, j] - mu) * rs
            xhat[i, j] = <real> xc
            y[i, j] = <real> (xc * <double> gain[j] + <double> bias[j])


cdef void _ln_bwd_impl(real[:, ::1] xhat, real[:, ::1] rstd, real[::1] gain,
                       real[:, ::1] g, real[:, ::1] gx,
                       double[::1] ggain, double[::1] gbias) noexcept nogil:
    cdef Py_ssize_t i, j, n = xhat.shape[0], d = xhat.shape[1]
    cdef double m1, m2, gy, go, xh
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            gy = <double> g[i, j] * <double> gain[j]
            m1 += gy
            m2 += gy * <double> xhat[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            go = <double> g[i, j]
            xh = <double> xhat[i, j]
            gy = go * <double> gain[j]
            gx[i, j] = <real> (<double> rstd[i, 0] * (gy - m1 - xh * m2))
            ggain[j] += go * xh
            gbias[j] += go


cdef void _adam_impl(real[::1] param, real[::1] grad, real[::1] m, real[::1] v,
                     double lr, double b1, double b2, double eps,
                     double b1c, double b2c) noexcept nogil:
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, mi, vi
    for i in range(n):
        g = <double> grad[i]
        mi = b1 * <double> m[i] + (1.0 - b1) * g
        vi = b2 * <double> v[i] + (1.0 - b2) * g * g
        m[i] = <real> mi
        v[i] = <real> vi
        param[i] = <real> (<double> param[i] - lr * (mi / b1c) / (sqrt(vi / b2c) + eps))


# ---------------------------------------------------------------------------
# wrappers (dtype dispatch happens here)

def gelu_fwd(x):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _gelu_fwd_impl[cython.float](x.ravel(), out.ravel())
    else:
        _gelu_fwd_impl[cython.double](x.ravel(), out.ravel())
    return out


def gelu_bwd(x, grad_out):
    x = np.ascontiguousarray(x)
    g = np.ascontiguousarray(grad_out, dtype=x.dtype)
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _gelu_bwd_impl[cython.float](x.ravel(), g.ravel(), out.ravel())
    else:
        _gelu_bwd_impl[cython.double](x.ravel(), g.ravel(), out.ravel())
    return out


def softmax_last_fwd(x):
    x = np.ascontiguousarray(x)
    d = x.shape[x.ndim - 1]
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _softmax_fwd_impl[cython.float](x.reshape(-1, d), out.reshape(-1, d))
    else:
        _softmax_fwd_impl[cython.double](x.reshape(-1, d), out.reshape(-1, d))
    return out


def softmax_last_bwd(y, grad_out):
    y = np.ascontiguousarray(y)
    g = np.ascontiguousarray(grad_out, dtype=y.dtype)
    d = y.shape[y.ndim - 1]
    out = np.empty_like(y)
    if y.dtype == np.float32:
        _softmax_bwd_impl[cython.float](y.reshape(-1, d), g.reshape(-1, d), out.reshape(-1, d))
    else:
        _softmax_bwd_impl[cython.double](y.reshape(-1, d), g.reshape(-1, d), out.reshape(-1, d))
    return out


def layer_norm_fwd(x, gain, bias, eps):
    """Returns (y, xhat, rstd); xhat and rstd feed the backward pass."""
    x = np.ascontiguousarray(x)
    gain = np.ascontiguousarray(gain, dtype=x.dtype)
    bias = np.ascontiguousarray(bias, dtype=x.dtype)
    d = x.shape[x.ndim - 1]
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(x.shape[:x.ndim - 1] + (1,), dtype=x.dtype)
    if x.dtype == np.float32:
        _ln_fwd_impl[cython.float](x.reshape(-1, d), gain, bias, eps,
                                   y.reshape(-1, d), xhat.reshape(-1, d), rstd.reshape(-1, 1))
    else:
        _ln_fwd_impl[cython.double](x.reshape(-1, d), gain, bias, eps,
                                    y.reshape(-1, d), xhat.reshape(-1, d), rstd.reshape(-1, 1))
    return y, xhat, rstd


def layer_norm_bwd(xhat, rstd, gain, grad_out):
    xhat = np.ascontiguousarray(xhat)
    rstd = np.ascontiguousarray(rstd, dtype=xhat.dtype)
    gain = np.ascontiguousarray(gain, dtype=xhat.dtype)
    g = np.ascontiguousarray(grad_out, dtype=xhat.dtype)
    d = xhat.shape[xhat.ndim - 1]
    gx = np.empty_like(xhat)
    ggain = np.zeros(d, dtype=np.float64)
    gbias = np.zeros(d, dtype=np.float64)
    if xhat.dtype == np.float32:
        _ln_bwd_impl[cython.float](xhat.reshape(-1, d), rstd.reshape(-1, 1), gain,
                                   g.reshape(-1, d), gx.reshape(-1, d), ggain, gbias)
    else:
        _ln_bwd_impl[cython.double](xhat.reshape(-1, d), rstd.reshape(-1, 1), gain,
                                    g.reshape(-1, d), gx.reshape(-1, d), ggain, gbias)
    return gx, ggain.astype(xhat.dtype), gbias.astype(xhat.dtype)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    """In-place Adam step with bias correction; ``step`` is 1-based."""
    for name, a in (("param", param), ("m", m), ("v", v)):
        if not a.flags["C_CONTIGUOUS"]:
            raise ValueError(f"adam_update: {name} must be C-contiguous for in-place update")
    g = np.ascontiguousarray(grad, dtype=param.dtype)
    cdef double b1c = 1.0 - beta1 ** step
    cdef double b2c = 1.0 - beta2 ** step
    if param.dtype == np.float32:
        _adam_impl[cython.float](param.ravel(), g.ravel(), m.ravel(), v.ravel(),
                                 lr, beta1, beta2, eps, b1c, b2c)
    else:
        _adam_impl[cython.double](param.ravel(), g.ravel(), m.ravel(), v.ravel(),
                                  lr, beta1, beta2, eps, b1c, b2c)
