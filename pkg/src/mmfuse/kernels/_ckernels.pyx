# Compiled kernel backend. Mirrors numpy_backend exactly; see that module
# for the semantic contract. Matmul goes through BLAS gemm; elementwise and
# softmax work is fused into single passes. Above _SIMD_CUTOVER elements the
# libm-bound forward transcendentals delegate to numpy, whose SIMD math
# beats a scalar loop there; the fused backward kernels win at every size.

import numpy as np

from libc.math cimport exp, log, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm, sgemm

NAME = "c"

_SIMD_CUTOVER = 256
_SOFTMAX_CUTOVER = 4096

# opcode values must match numpy_backend
cdef enum:
    EXP, LOG, SQRT, TANH, RELU, SIGMOID, SQUARE, NEG

cdef enum:
    ADD, SUB, MUL, DIV

ctypedef fused real:
    float
    double


cdef inline double _sigmoid1(double v) noexcept nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


cdef void _unary_loop(int op, real[::1] x, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v
    if op == EXP:
        for i in range(n):
            out[i] = <real>exp(<double>x[i])
    elif op == LOG:
        for i in range(n):
            out[i] = <real>log(<double>x[i])
    elif op == SQRT:
        for i in range(n):
            out[i] = <real>sqrt(<double>x[i])
    elif op == TANH:
        for i in range(n):
            out[i] = <real>tanh(<double>x[i])
    elif op == RELU:
        for i in range(n):
            out[i] = x[i] if x[i] > 0 else <real>0.0
    elif op == SIGMOID:
        for i in range(n):
            out[i] = <real>_sigmoid1(<double>x[i])
    elif op == SQUARE:
        for i in range(n):
            out[i] = x[i] * x[i]
    else:  # NEG
        for i in range(n):
            out[i] = -x[i]


cdef void _unary_grad_loop(int op, real[::1] g, real[::1] x, real[::1] y,
                           real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = g.shape[0]
    if op == EXP:
        for i in range(n):
            out[i] = g[i] * y[i]
    elif op == LOG:
        for i in range(n):
            out[i] = g[i] / x[i]
    elif op == SQRT:
        for i in range(n):
            out[i] = <real>(g[i] * 0.5 / y[i])
    elif op == TANH:
        for i in range(n):
            out[i] = <real>(g[i] * (1.0 - <double>y[i] * y[i]))
    elif op == RELU:
        for i in range(n):
            out[i] = g[i] if x[i] > 0 else <real>0.0
    elif op == SIGMOID:
        for i in range(n):
            out[i] = <real>(g[i] * y[i] * (1.0 - <double>y[i]))
    elif op == SQUARE:
        for i in range(n):
            out[i] = <real>(g[i] * 2.0 * x[i])
    else:  # NEG
        for i in range(n):
            out[i] = -g[i]


cdef void _binary_loop(int op, real[::1] a, real[::1] b, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    if op == ADD:
        for i in range(n):
            out[i] = a[i] + b[i]
    elif op == SUB:
        for i in range(n):
            out[i] = a[i] - b[i]
    elif op == MUL:
        for i in range(n):
            out[i] = a[i] * b[i]
    else:  # DIV
        for i in range(n):
            out[i] = a[i] / b[i]


cdef void _binary_scalar_loop(int op, real[::1] a, real s, bint scalar_right,
                              real[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    if op == ADD:
        for i in range(n):
            out[i] = a[i] + s
    elif op == SUB:
        if scalar_right:
            for i in range(n):
                out[i] = a[i] - s
        else:
            for i in range(n):
                out[i] = s - a[i]
    elif op == MUL:
        for i in range(n):
            out[i] = a[i] * s
    else:  # DIV
        if scalar_right:
            for i in range(n):
                out[i] = a[i] / s
        else:
            for i in range(n):
                out[i] = s / a[i]


cdef void _binary_rowvec_loop(int op, real[:, ::1] a, real[::1] v,
                              real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, rows = a.shape[0], cols = a.shape[1]
    if op == ADD:
        for i in range(rows):
            for j in range(cols):
                out[i, j] = a[i, j] + v[j]
    elif op == SUB:
        for i in range(rows):
            for j in range(cols):
                out[i, j] = a[i, j] - v[j]
    elif op == MUL:
        for i in range(rows):
            for j in range(cols):
                out[i, j] = a[i, j] * v[j]
    else:  # DIV
        for i in range(rows):
            for j in range(cols):
                out[i, j] = a[i, j] / v[j]


cdef void _gemm(real[:, ::1] a, real[:, ::1] b, real[:, ::1] out) noexcept nogil:
    # Row-major product via column-major BLAS: C^T = B^T A^T.
    cdef int m = <int>a.shape[0], k = <int>a.shape[1], n = <int>b.shape[1]
    cdef double alpha_d = 1.0, beta_d = 0.0
    cdef float alpha_s = 1.0, beta_s = 0.0
    if real is double:
        dgemm("N", "N", &n, &m, &k, &alpha_d, <double*>&b[0, 0], &n,
              <double*>&a[0, 0], &k, &beta_d, <double*>&out[0, 0], &n)
    else:
        sgemm("N", "N", &n, &m, &k, &alpha_s, <float*>&b[0, 0], &n,
              <float*>&a[0, 0], &k, &beta_s, <float*>&out[0, 0], &n)


cdef void _softmax_loop(real[:, ::1] x, real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, rows = x.shape[0], cols = x.shape[1]
    cdef double m, s
    for i in range(rows):
        m = <double>x[i, 0]
        for j in range(1, cols):
            if <double>x[i, j] > m:
                m = <double>x[i, j]
        s = 0.0
        for j in range(cols):
            out[i, j] = <real>exp(<double>x[i, j] - m)
            s += <double>out[i, j]
        for j in range(cols):
            out[i, j] = <real>(<double>out[i, j] / s)


cdef void _softmax_grad_loop(real[:, ::1] g, real[:, ::1] y,
                             real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, rows = g.shape[0], cols = g.shape[1]
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += <double>g[i, j] * <double>y[i, j]
        for j in range(cols):
            out[i, j] = <real>(<double>y[i, j] * (<double>g[i, j] - dot))


# ---------------------------------------------------------------------------
# python-level entry points (dtype dispatch + shape bookkeeping)


_SIMD_FWD = {EXP: np.exp, LOG: np.log, SQRT: np.sqrt, TANH: np.tanh}


def unary(int op, x):
    if x.size >= _SIMD_CUTOVER and op in _SIMD_FWD:
        with np.errstate(all="ignore"):
            return _SIMD_FWD[op](x)
    out = np.empty_like(x)
    if x.dtype == np.float64:
        _unary_loop[double](op, x.ravel(), out.ravel())
    else:
        _unary_loop[float](op, x.ravel(), out.ravel())
    return out


def unary_grad(int op, g, x, y):
    out = np.empty_like(g)
    if g.dtype == np.float64:
        _unary_grad_loop[double](op, g.ravel(), x.ravel(), y.ravel(), out.ravel())
    else:
        _unary_grad_loop[float](op, g.ravel(), x.ravel(), y.ravel(), out.ravel())
    return out


def binary(int op, a, b):
    out = np.empty_like(a)
    if a.dtype == np.float64:
        _binary_loop[double](op, a.ravel(), b.ravel(), out.ravel())
    else:
        _binary_loop[float](op, a.ravel(), b.ravel(), out.ravel())
    return out


def binary_scalar(int op, a, double s, bint scalar_right):
    out = np.empty_like(a)
    if a.dtype == np.float64:
        _binary_scalar_loop[double](op, a.ravel(), s, scalar_right, out.ravel())
    else:
        _binary_scalar_loop[float](op, a.ravel(), <float>s, scalar_right, out.ravel())
    return out


def binary_rowvec(int op, a, v):
    out = np.empty_like(a)
    if a.dtype == np.float64:
        _binary_rowvec_loop[double](op, a, v, out)
    else:
        _binary_rowvec_loop[float](op, a, v, out)
    return out


def matmul(a, b):
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    if a.dtype == np.float64:
        _gemm[double](a, b, out)
    else:
        _gemm[float](a, b, out)
    return out


def softmax(x):
    if x.size >= _SOFTMAX_CUTOVER:
        m = np.max(x, axis=1, keepdims=True)
        e = np.exp(x - m)
        return e / np.sum(e, axis=1, keepdims=True)
    out = np.empty_like(x)
    if x.dtype == np.float64:
        _softmax_loop[double](x, out)
    else:
        _softmax_loop[float](x, out)
    return out


def softmax_grad(g, y):
    out = np.empty_like(g)
    if g.dtype == np.float64:
        _softmax_grad_loop[double](g, y, out)
    else:
        _softmax_grad_loop[float](g, y, out)
    return out


def reduce_sum(x, axis):
    # Sums are accumulation-order sensitive; defer to numpy in both backends
    # so the two stay bit-compatible on this op.
    return np.sum(x, axis=axis)


def reduce_max(x, axis):
    values = np.max(x, axis=axis)
    indices = np.argmax(x, axis=axis).astype(np.int64)
    return values, indices
