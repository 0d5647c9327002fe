"""Kernel backend selection.

Two interchangeable backends implement the dense primitives the tensor
engine executes: a compiled Cython module (preferred) and a numpy fallback.
Selection happens once at import; MMFUSE_KERNELS=py|c forces a choice, and
`benchmarks/bench_kernels.py` compares the two.
"""

import os

from . import numpy_backend

EXP = numpy_backend.EXP
LOG = numpy_backend.LOG
SQRT = numpy_backend.SQRT
TANH = numpy_backend.TANH
RELU = numpy_backend.RELU
SIGMOID = numpy_backend.SIGMOID
SQUARE = numpy_backend.SQUARE
NEG = numpy_backend.NEG
ADD = numpy_backend.ADD
SUB = numpy_backend.SUB
MUL = numpy_backend.MUL
DIV = numpy_backend.DIV


def _select():
    forced = os.environ.get("MMFUSE_KERNELS", "").lower()
    if forced == "py":
        return numpy_backend
    try:
        from . import _ckernels
    except ImportError:
        if forced == "c":
            raise ImportError(
                "MMFUSE_KERNELS=c but the compiled kernel module is not built"
            )
        return numpy_backend
    return _ckernels


_impl = _select()


def backend_name():
    return _impl.NAME


def use_backend(name):
    """Switch backends at runtime (used by parity tests and benchmarks)."""
    global _impl
    if name == "numpy":
        _impl = numpy_backend
    elif name == "c":
        from . import _ckernels

        _impl = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def matmul(a, b):
    return _impl.matmul(a, b)


def unary(op, x):
    return _impl.unary(op, x)


def unary_grad(op, g, x, y):
    return _impl.unary_grad(op, g, x, y)


def binary(op, a, b):
    return _impl.binary(op, a, b)


def binary_scalar(op, a, s, scalar_right):
    return _impl.binary_scalar(op, a, s, scalar_right)


def binary_rowvec(op, a, v):
    return _impl.binary_rowvec(op, a, v)


def softmax(x):
    return _impl.softmax(x)


def softmax_grad(g, y):
    return _impl.softmax_grad(g, y)


def reduce_sum(x, axis):
    return _impl.reduce_sum(x, axis)


def reduce_max(x, axis):
    return _impl.reduce_max(x, axis)
