"""Dense tensors with reverse-mode automatic differentiation.

A recorded tape of per-operation backward closures, just enough mechanism
for the two fixed fusion architectures.  Tensors wrap contiguous numpy
arrays (float32 for training, float64 for gradient checks); ops that see no
grad-requiring parent skip tape construction entirely, so inference runs
tape-free.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "Parameter", "constant",
    "add", "sub", "mul", "neg", "reciprocal", "matmul",
    "tsum", "tmean", "tabs", "tlog", "tsqrt", "ttanh",
    "sigmoid", "relu", "prelu", "glu", "linear",
    "reshape", "transpose", "getitem", "pad_last", "concat",
]


class Tensor:
    """Autodiff variable: numpy payload + gradient + tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, cotangent: np.ndarray | None = None):
        """Reverse sweep from this node.  Accepts an explicit cotangent for
        non-scalar roots; defaults to ones."""
        if cotangent is None:
            cotangent = np.ones_like(self.data)
        else:
            cotangent = np.asarray(cotangent, dtype=self.data.dtype)
            if cotangent.shape != self.data.shape:
                raise ValueError("cotangent shape mismatch")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        _accumulate(self, cotangent)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar, used sparingly so graphs stay explicit
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor: named, gradient-accumulating."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(np.ascontiguousarray(data), requires_grad=True)
        self.name = name


def constant(value, dtype=None) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype))


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True) if g.dtype != t.data.dtype else g.copy()
    else:
        t.grad += g


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Make an op output; skip the tape when no parent needs gradients."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), backward)


def reciprocal(a: Tensor) -> Tensor:
    data = 1.0 / a.data

    def backward(g):
        _accumulate(a, -g * data * data)

    return _node(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(data, (a, b), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return _node(data, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        _accumulate(a, np.full(a.data.shape, g / n, dtype=a.data.dtype))

    return _node(data, (a,), backward)


def tabs(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _node(data, (a,), backward)


def tlog(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return _node(data, (a,), backward)


def tsqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * (0.5 / data))

    return _node(data, (a,), backward)


def ttanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - data * data))

    return _node(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accumulate(a, g * data * (1.0 - data))

    return _node(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(g):
        _accumulate(a, g * (a.data > 0))

    return _node(data, (a,), backward)


def prelu(a: Tensor, alpha: Tensor) -> Tensor:
    """Parametric ReLU with a scalar slope parameter."""
    pos = a.data > 0
    data = np.where(pos, a.data, alpha.data * a.data)

    def backward(g):
        _accumulate(a, g * np.where(pos, 1.0, alpha.data))
        _accumulate(alpha, np.asarray((g * np.where(pos, 0.0, a.data)).sum(),
                                      dtype=alpha.data.dtype))

    return _node(data, (a, alpha), backward)


def glu(a: Tensor, axis: int = 1) -> Tensor:
    """Gated linear unit: split in half along axis, first half * sigmoid(second)."""
    n = a.data.shape[axis]
    if n % 2:
        raise ValueError(f"glu axis size must be even, got {n}")
    half = n // 2
    sl_a = [slice(None)] * a.data.ndim
    sl_b = [slice(None)] * a.data.ndim
    sl_a[axis] = slice(0, half)
    sl_b[axis] = slice(half, n)
    left = a.data[tuple(sl_a)]
    gate = 1.0 / (1.0 + np.exp(-a.data[tuple(sl_b)]))
    data = left * gate

    def backward(g):
        full = np.empty_like(a.data)
        full[tuple(sl_a)] = g * gate
        full[tuple(sl_b)] = g * left * gate * (1.0 - gate)
        _accumulate(a, full)

    return _node(data, (a,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w.T + b over the last axis; leading axes are batch."""
    lead = x.data.shape[:-1]
    d = x.data.shape[-1]
    x2 = x.data.reshape(-1, d)
    out = x2 @ w.data.T
    if b is not None:
        out = out + b.data
    data = out.reshape(*lead, w.data.shape[0])

    def backward(g):
        g2 = g.reshape(-1, w.data.shape[0])
        _accumulate(x, (g2 @ w.data).reshape(x.data.shape))
        _accumulate(w, g2.T @ x2)
        if b is not None:
            _accumulate(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    data = np.ascontiguousarray(a.data.transpose(axes))
    inv = np.argsort(axes)

    def backward(g):
        _accumulate(a, np.ascontiguousarray(g.transpose(inv)))

    return _node(data, (a,), backward)


def getitem(a: Tensor, key) -> Tensor:
    data = np.ascontiguousarray(a.data[key])

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accumulate(a, full)

    return _node(data, (a,), backward)


def pad_last(a: Tensor, before: int, after: int) -> Tensor:
    """Zero-pad the last axis."""
    if before == 0 and after == 0:
        return a
    widths = [(0, 0)] * (a.data.ndim - 1) + [(before, after)]
    data = np.pad(a.data, widths)

    def backward(g):
        sl = [slice(None)] * (a.data.ndim - 1) + [slice(before, before + a.data.shape[-1])]
        _accumulate(a, g[tuple(sl)])

    return _node(data, (a,), backward)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _node(data, tuple(tensors), backward)
