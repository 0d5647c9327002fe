"""Dense tensor engine with reverse-mode differentiation.

Eager numpy-backed forward execution over 0/1/2-D tensors, a per-thread
computation graph recorded on the result tensors, and a finite-difference
gradient checker. Every forward and backward product is checked for
NaN/Inf and aborts with NumericError instead of propagating.

Broadcasting is limited to what the models here need: equal shapes,
scalar-with-anything, and (B, n) with (n,) row vectors.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from . import kernels as K
from .errors import GraphError, NumericError, ShapeError

DEFAULT_DTYPE = np.float64

# negative values above this magnitude are clamped by sqrt's domain guard
DOMAIN_TOL = 1e-12

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


def _next_seq():
    seq = getattr(_state, "seq", 0) + 1
    _state.seq = seq
    return seq


@contextmanager
def no_grad():
    """Disable graph recording inside the context (inference/eval paths)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _ensure_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {op}")


def _as_array(data, dtype):
    # np.array rather than ascontiguousarray: the latter promotes 0-d to 1-D
    arr = np.array(data, dtype=dtype, copy=True, order="C")
    if arr.ndim > 2:
        raise ShapeError(f"tensors are at most 2-D, got shape {arr.shape}")
    if any(d <= 0 for d in arr.shape):
        raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
    return arr


class Tensor:
    """Dense real tensor participating in a differentiable graph.

    Leaf tensors are created directly; op results carry a backward closure
    and links to their parents. Gradients accumulate into `.grad` on leaves
    when `backward()` runs on a scalar root.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn",
                 "_seq", "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None:
            dtype = DEFAULT_DTYPE
        if dtype not in (np.float32, np.float64):
            raise ShapeError(f"unsupported dtype {dtype}")
        self.data = _as_array(data, dtype)
        _ensure_finite(self.data, "tensor creation")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self._seq = 0
        self._backward_done = False

    # -- introspection ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph management ---------------------------------------------------

    def detach(self):
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._grad_fn = None
        out._seq = 0
        out._backward_done = False
        return out

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")
        if self._backward_done:
            raise GraphError("backward() already ran for this graph; "
                             "run a new forward pass first")
        self._backward_done = True
        Graph(self).run()

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


class Graph:
    """Execution record reachable from a scalar root, in reverse order.

    Tensors are stamped with a per-thread sequence number at creation, so
    sorting by decreasing stamp replays the exact reverse of the forward
    execution order.
    """

    def __init__(self, root):
        self.root = root
        nodes = []
        seen = {id(root)}
        stack = [root]
        while stack:
            t = stack.pop()
            if t._grad_fn is not None:
                nodes.append(t)
            for p in t._parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
        nodes.sort(key=lambda t: t._seq, reverse=True)
        self.nodes = nodes

    def run(self):
        root = self.root
        if root._grad_fn is None:
            root.grad = np.ones_like(root.data)
            return
        grads = {id(root): np.ones_like(root.data)}
        for t in self.nodes:
            g = grads.pop(id(t), None)
            if g is None:
                continue
            for p, pg in zip(t._parents, t._grad_fn(g)):
                if pg is None or not p.requires_grad:
                    continue
                _ensure_finite(pg, "backward pass")
                if p._grad_fn is None:
                    p.grad = pg.copy() if p.grad is None else p.grad + pg
                else:
                    cur = grads.get(id(p))
                    grads[id(p)] = pg if cur is None else cur + pg


def _make(data, parents, grad_fn, op):
    _ensure_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward_done = False
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
        out._seq = _next_seq()
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
        out._seq = 0
    return out


def _unbroadcast(g, shape):
    """Sum a gradient down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum(), dtype=g.dtype)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=i, keepdims=True)
    return np.ascontiguousarray(g)


# ---------------------------------------------------------------------------
# elementwise binary ops


def _binary_forward(op, a, b):
    if a.shape == b.shape:
        return K.binary(op, a, b)
    if b.ndim == 0:
        return K.binary_scalar(op, a, float(b), True)
    if a.ndim == 0:
        return K.binary_scalar(op, b, float(a), False)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return K.binary_rowvec(op, a, b)
    raise ShapeError(f"incompatible elementwise shapes {a.shape} and {b.shape}")


def _binary(opcode, opname, a, b, grad_a, grad_b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.dtype != b.dtype:
            raise ShapeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    elif isinstance(a, Tensor):
        b = Tensor(np.asarray(b), dtype=a.dtype.type)
    elif isinstance(b, Tensor):
        a = Tensor(np.asarray(a), dtype=b.dtype.type)
    else:
        raise ShapeError(f"{opname} needs at least one Tensor operand")
    data = _binary_forward(opcode, a.data, b.data)

    def bwd(g):
        return (_unbroadcast(grad_a(g, a.data, b.data), a.shape),
                _unbroadcast(grad_b(g, a.data, b.data), b.shape))

    return _make(data, (a, b), bwd, opname)


def add(a, b):
    return _binary(K.ADD, "add", a, b,
                   lambda g, x, y: g,
                   lambda g, x, y: g)


def sub(a, b):
    return _binary(K.SUB, "sub", a, b,
                   lambda g, x, y: g,
                   lambda g, x, y: -g)


def mul(a, b):
    return _binary(K.MUL, "mul", a, b,
                   lambda g, x, y: g * y,
                   lambda g, x, y: g * x)


def div(a, b):
    return _binary(K.DIV, "div", a, b,
                   lambda g, x, y: g / y,
                   lambda g, x, y: -g * x / (y * y))


# ---------------------------------------------------------------------------
# elementwise unary ops


def _unary(opcode, opname, x, check=None):
    if not isinstance(x, Tensor):
        raise ShapeError(f"{opname} expects a Tensor")
    if check is not None:
        check(x.data)
    data = K.unary(opcode, x.data)
    saved_in, saved_out = x.data, data

    def bwd(g):
        return (K.unary_grad(opcode, g, saved_in, saved_out),)

    return _make(data, (x,), bwd, opname)


def exp(x):
    return _unary(K.EXP, "exp", x)


def _check_log_domain(arr):
    if np.any(arr <= 0):
        raise NumericError("log domain error: inputs must be strictly positive")


def log(x):
    return _unary(K.LOG, "log", x, check=_check_log_domain)


def sqrt(x):
    if not isinstance(x, Tensor):
        raise ShapeError("sqrt expects a Tensor")
    lo = float(x.data.min())
    if lo < -DOMAIN_TOL:
        raise NumericError(f"sqrt domain error: min value {lo} below -{DOMAIN_TOL}")
    # floating-point negatives within tolerance are clamped to zero
    xin = x.data if lo >= 0 else np.maximum(x.data, 0.0)
    data = K.unary(K.SQRT, xin)

    def bwd(g):
        return (K.unary_grad(K.SQRT, g, xin, data),)

    return _make(data, (x,), bwd, "sqrt")


def tanh(x):
    return _unary(K.TANH, "tanh", x)


def relu(x):
    return _unary(K.RELU, "relu", x)


def sigmoid(x):
    return _unary(K.SIGMOID, "sigmoid", x)


def square(x):
    return _unary(K.SQUARE, "square", x)


def neg(x):
    return _unary(K.NEG, "neg", x)


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div,
    "exp": exp, "log": log, "sqrt": sqrt, "tanh": tanh,
    "relu": relu, "sigmoid": sigmoid, "square": square, "neg": neg,
}


def elementwise(op, *inputs):
    """Dispatch an elementwise op by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ShapeError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


# ---------------------------------------------------------------------------
# matmul


def matmul(a, b):
    if not (isinstance(a, Tensor) and isinstance(b, Tensor)):
        raise ShapeError("matmul expects Tensor operands")
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul operands must be 1-D or 2-D")
    a2 = a.data if a.ndim == 2 else a.data.reshape(1, -1)
    b2 = b.data if b.ndim == 2 else b.data.reshape(-1, 1)
    if a2.shape[1] != b2.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    y2 = K.matmul(a2, b2)
    out_shape = y2.shape
    if a.ndim == 1:
        out_shape = out_shape[1:]
    if b.ndim == 1:
        out_shape = out_shape[:-1]
    data = y2.reshape(out_shape).copy()

    a_shape, b_shape = a.shape, b.shape

    def bwd(g):
        g2 = g.reshape(y2.shape)
        ga = K.matmul(g2, np.ascontiguousarray(b2.T))
        gb = K.matmul(np.ascontiguousarray(a2.T), g2)
        return ga.reshape(a_shape), gb.reshape(b_shape)

    return _make(data, (a, b), bwd, "matmul")


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape):
    data = x.data.reshape(shape).copy()
    old_shape = x.shape

    def bwd(g):
        return (np.ascontiguousarray(g.reshape(old_shape)),)

    return _make(data, (x,), bwd, "reshape")


def transpose(x):
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")
    data = np.ascontiguousarray(x.data.T)

    def bwd(g):
        return (np.ascontiguousarray(g.T),)

    return _make(data, (x,), bwd, "transpose")


def concat(parts, axis=0):
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of zero parts")
    if any(not isinstance(p, Tensor) for p in parts):
        raise ShapeError("concat expects Tensors")
    nd = parts[0].ndim
    if nd == 0:
        raise ShapeError("concat of scalars is not defined; reshape first")
    ax = axis % nd
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != nd or any(
            i != ax and p.shape[i] != ref[i] for i in range(nd)
        ):
            raise ShapeError(
                f"concat shape mismatch on non-concat dims: {ref} vs {p.shape}"
            )
        if p.dtype != parts[0].dtype:
            raise ShapeError("concat dtype mismatch")
    data = np.ascontiguousarray(np.concatenate([p.data for p in parts], axis=ax))
    sizes = [p.shape[ax] for p in parts]

    def bwd(g):
        grads = []
        offset = 0
        for s in sizes:
            sl = [slice(None)] * nd
            sl[ax] = slice(offset, offset + s)
            grads.append(np.ascontiguousarray(g[tuple(sl)]))
            offset += s
        return grads

    return _make(data, parts, bwd, "concat")


def narrow(x, axis, start, length):
    """Contiguous slice of `length` entries starting at `start` along axis."""
    nd = x.ndim
    if nd == 0:
        raise ShapeError("narrow on a scalar")
    ax = axis % nd
    n = x.shape[ax]
    if not (0 <= start and start + length <= n and length >= 1):
        raise ShapeError(f"narrow range [{start}, {start + length}) outside axis of size {n}")
    sl = [slice(None)] * nd
    sl[ax] = slice(start, start + length)
    data = np.ascontiguousarray(x.data[tuple(sl)])
    x_shape = x.shape

    def bwd(g):
        full = np.zeros(x_shape, dtype=g.dtype)
        full[tuple(sl)] = g
        return (full,)

    return _make(data, (x,), bwd, "narrow")


def stack_rows(parts):
    """Stack 1-D tensors of equal length into a (B, n) tensor."""
    return concat([reshape(p, (1, p.shape[0])) for p in parts], axis=0)


# ---------------------------------------------------------------------------
# softmax


def softmax(x, axis=-1):
    if x.ndim == 1:
        if axis not in (-1, 0):
            raise ShapeError(f"softmax axis {axis} invalid for 1-D input")
        x2 = x.data.reshape(1, -1)
    elif x.ndim == 2:
        if axis not in (-1, 1):
            raise ShapeError("softmax is supported along the last axis only")
        x2 = x.data
    else:
        raise ShapeError("softmax expects a 1-D or 2-D tensor")
    y2 = K.softmax(x2)
    data = np.ascontiguousarray(y2.reshape(x.shape))

    def bwd(g):
        g2 = g.reshape(y2.shape)
        return (K.softmax_grad(g2, y2).reshape(x.shape),)

    return _make(data, (x,), bwd, "softmax")


# ---------------------------------------------------------------------------
# reductions


def _check_axis(x, axis):
    if axis is None:
        return None
    ax = axis % x.ndim if x.ndim else 0
    if x.ndim == 0 or ax >= x.ndim:
        raise ShapeError(f"reduction axis {axis} invalid for shape {x.shape}")
    return ax


def _broadcast_back(g, x_shape, axis):
    if axis is None or len(x_shape) <= 1:
        return np.broadcast_to(g, x_shape).astype(g.dtype, copy=True)
    if axis == 0:
        return np.broadcast_to(g[None, :], x_shape).copy()
    return np.broadcast_to(g[:, None], x_shape).copy()


def sum_(x, axis=None):
    ax = _check_axis(x, axis)
    data = np.asarray(K.reduce_sum(x.data, ax))
    x_shape = x.shape

    def bwd(g):
        return (_broadcast_back(g, x_shape, ax),)

    return _make(data, (x,), bwd, "sum")


def mean(x, axis=None):
    ax = _check_axis(x, axis)
    n = x.size if ax is None else x.shape[ax]
    data = np.asarray(K.reduce_sum(x.data, ax)) / n
    x_shape = x.shape

    def bwd(g):
        return (_broadcast_back(g / n, x_shape, ax),)

    return _make(data, (x,), bwd, "mean")


def max_(x, axis=None):
    """Max reduction; gradient flows to the first maximal element."""
    ax = _check_axis(x, axis)
    values, indices = K.reduce_max(x.data, ax)
    data = np.asarray(values)
    x_shape = x.shape

    def bwd(g):
        full = np.zeros(x_shape, dtype=g.dtype)
        if ax is None:
            full.ravel()[int(indices)] = g
        elif len(x_shape) == 1:
            full[int(indices)] = g
        elif ax == 0:
            full[indices, np.arange(x_shape[1])] = g
        else:
            full[np.arange(x_shape[0]), indices] = g
        return (full,)

    return _make(data, (x,), bwd, "max")


_REDUCTIONS = {"sum": sum_, "mean": mean, "max": max_}


def reduce_op(op, x, axis=None):
    """Dispatch a reduction by name."""
    try:
        fn = _REDUCTIONS[op]
    except KeyError:
        raise ShapeError(f"unknown reduction {op!r}") from None
    return fn(x, axis=axis)


# ---------------------------------------------------------------------------
# compositions used across the models


def clamp_min(x, floor):
    """max(x, floor) elementwise, with zero gradient where x < floor."""
    return add(relu(sub(x, floor)), floor)


def logsumexp(x):
    """log(sum(exp(x))) of a 1-D tensor, max-subtracted; exact gradient."""
    m = max_(x)
    return add(log(sum_(exp(sub(x, m)))), m)


def logmeanexp(x):
    """log(mean(exp(x))) of a 1-D tensor, max-subtracted; exact gradient."""
    m = max_(x)
    return add(log(mean(exp(sub(x, m)))), m)


# ---------------------------------------------------------------------------
# finite-difference verification


def gradcheck(f, params, eps=1e-5):
    """Compare reverse-mode gradients of f() against central differences.

    f is a zero-argument callable returning a scalar Tensor; params are the
    leaf tensors to perturb. Returns the max over all coordinates of
    |g_ad - g_fd| / max(1, |g_fd|).
    """
    if isinstance(params, Tensor):
        params = [params]
    params = list(params)
    for p in params:
        p.grad = None
    out = f()
    if not isinstance(out, Tensor) or out.size != 1:
        raise GraphError("gradcheck needs a scalar-valued function")
    out.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        for p in params
    ]

    def value():
        with no_grad():
            return float(f().data.reshape(()))

    max_err = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.ravel()
        gflat = ga.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = value()
            flat[i] = orig - eps
            fm = value()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * eps)
            err = abs(float(gflat[i]) - fd) / max(1.0, abs(fd))
            if err > max_err:
                max_err = err
    return max_err
