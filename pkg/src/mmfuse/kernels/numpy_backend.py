"""Reference kernel backend built on numpy.

This backend is always available and defines the numerical semantics the
compiled backend must reproduce. All functions take C-contiguous float32 or
float64 arrays and return new arrays of the same dtype; overflow is allowed
to produce inf/nan here (the tensor engine turns non-finite results into
hard errors).
"""

import numpy as np

NAME = "numpy"

# unary opcodes
EXP, LOG, SQRT, TANH, RELU, SIGMOID, SQUARE, NEG = range(8)
# binary opcodes
ADD, SUB, MUL, DIV = range(4)


def _sigmoid(x):
    # piecewise form avoids exp overflow for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def unary(op, x):
    with np.errstate(all="ignore"):
        if op == EXP:
            return np.exp(x)
        if op == LOG:
            return np.log(x)
        if op == SQRT:
            return np.sqrt(x)
        if op == TANH:
            return np.tanh(x)
        if op == RELU:
            return np.where(x > 0, x, 0).astype(x.dtype, copy=False)
        if op == SIGMOID:
            return _sigmoid(x)
        if op == SQUARE:
            return x * x
        if op == NEG:
            return -x
    raise ValueError(f"unknown unary opcode {op}")


def unary_grad(op, g, x, y):
    """d(loss)/dx for y = unary(op, x) given upstream gradient g."""
    with np.errstate(all="ignore"):
        if op == EXP:
            return g * y
        if op == LOG:
            return g / x
        if op == SQRT:
            return g * 0.5 / y
        if op == TANH:
            return g * (1.0 - y * y)
        if op == RELU:
            return g * (x > 0)
        if op == SIGMOID:
            return g * y * (1.0 - y)
        if op == SQUARE:
            return g * 2.0 * x
        if op == NEG:
            return -g
    raise ValueError(f"unknown unary opcode {op}")


def binary(op, a, b):
    with np.errstate(all="ignore"):
        if op == ADD:
            return a + b
        if op == SUB:
            return a - b
        if op == MUL:
            return a * b
        if op == DIV:
            return a / b
    raise ValueError(f"unknown binary opcode {op}")


def binary_scalar(op, a, s, scalar_right):
    """a op s when scalar_right else s op a; s is a python float."""
    s = a.dtype.type(s)
    with np.errstate(all="ignore"):
        if op == ADD:
            return a + s
        if op == SUB:
            return (a - s) if scalar_right else (s - a)
        if op == MUL:
            return a * s
        if op == DIV:
            return (a / s) if scalar_right else (s / a)
    raise ValueError(f"unknown binary opcode {op}")


def binary_rowvec(op, a, v):
    """(B, n) op (n,) with the vector broadcast across rows."""
    return binary(op, a, v[None, :])


def matmul(a, b):
    return a @ b


def softmax(x):
    """Row softmax of a 2-D array, max-subtracted for stability."""
    m = np.max(x, axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=1, keepdims=True)


def softmax_grad(g, y):
    dot = np.sum(g * y, axis=1, keepdims=True)
    return y * (g - dot)


def reduce_sum(x, axis):
    return np.sum(x, axis=axis)


def reduce_max(x, axis):
    """Max values plus first-maximum indices (flat indices for axis=None)."""
    values = np.max(x, axis=axis)
    indices = np.argmax(x, axis=axis).astype(np.int64)
    return values, indices
