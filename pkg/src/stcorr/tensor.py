"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a C-contiguous (row-major) float32/float64 numpy array. Every
differentiable operation records its parents and a backward closure; a
GradTape replays the resulting graph once, in reverse topological order, and
returns gradients for its registered parameters (exact zeros for parameters
the loss never touched).

Shape discipline is deliberately strict: binary elementwise ops demand equal
shapes or a scalar operand. The only structured broadcasts in the package are
the documented per-frame-channel-over-space ones, and those live in named ops
(see scale_channels) rather than in implicit numpy broadcasting.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Mapping

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _coerce(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        # ascontiguousarray would promote 0-d arrays to 1-d, so guard on ndim
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _coerce(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward: Callable | None = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def parameter(data, dtype=np.float32) -> Tensor:
    """A trainable leaf tensor (always copies its input)."""
    return Tensor(np.array(data, dtype=dtype, copy=True), requires_grad=True)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _node(data: np.ndarray, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _acc(t: Tensor, g: np.ndarray):
    # out-of-place accumulation: safe when g is a broadcast view
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _binary_shapes(a: Tensor, b: Tensor):
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"dtype mismatch: {a.data.dtype} vs {b.data.dtype}")
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ValueError(f"shape mismatch: {a.shape} vs {b.shape} (no implicit broadcasting)")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    return g.sum() if shape == () and g.shape != () else g


# -- elementwise arithmetic ----------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _binary_shapes(a, b)

    def backward(g):
        _acc(a, _reduce_to(g, a.shape))
        _acc(b, _reduce_to(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _binary_shapes(a, b)

    def backward(g):
        _acc(a, _reduce_to(g, a.shape))
        _acc(b, _reduce_to(-g, b.shape))

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _binary_shapes(a, b)

    def backward(g):
        _acc(a, _reduce_to(g * b.data, a.shape))
        _acc(b, _reduce_to(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _acc(a, -g)

    return _node(-a.data, (a,), backward)


# -- reductions -----------------------------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _acc(a, np.broadcast_to(gg, a.shape))

    return _node(out, (a,), backward)


def tensor_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(tensor_sum(a, axis, keepdims), 1.0 / float(count))


# -- shape manipulation -----------------------------------------------------------


def reshape(a: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])

    def backward(g):
        _acc(a, g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(int(i) for i in np.argsort(axes))

    def backward(g):
        _acc(a, np.ascontiguousarray(g.transpose(inverse)))

    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), backward)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = (slice(None),) * axis + (slice(start, stop),)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _acc(a, full)

    return _node(a.data[index].copy(), (a,), backward)


def index_scalar(a: Tensor, i: int) -> Tensor:
    """Pick a[i] from a rank-1 tensor as a differentiable scalar."""
    if a.ndim != 1:
        raise ValueError("index_scalar expects a rank-1 tensor")

    def backward(g):
        full = np.zeros_like(a.data)
        full[i] = g
        _acc(a, full)

    return _node(a.data[i].copy(), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _acc(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather leading-axis entries: out[k] = a[index[k]], index any integer array.

    Output shape is index.shape + a.shape[1:]; the backward pass scatter-adds,
    so repeated indices accumulate.
    """
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index.reshape(-1), g.reshape((-1,) + a.shape[1:]))
        _acc(a, full)

    return _node(a.data[index], (a,), backward)


# -- linear algebra ------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects rank-2 operands, got {a.shape} @ {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"dtype mismatch: {a.data.dtype} vs {b.data.dtype}")

    def backward(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def einsum(subscripts: str, *tensors: Tensor) -> Tensor:
    """Differentiable einsum over a restricted grammar.

    Requirements: explicit '->', no ellipsis, no repeated index within one
    operand, and every operand index must appear in the output or in another
    operand (these cover all contractions the package uses, and make the
    backward rule a plain index swap).
    """
    if "->" not in subscripts or "." in subscripts:
        raise ValueError(f"einsum spec must be explicit and ellipsis-free: {subscripts!r}")
    lhs, out_spec = subscripts.replace(" ", "").split("->")
    in_specs = lhs.split(",")
    if len(in_specs) != len(tensors):
        raise ValueError("operand count does not match the spec")
    for k, spec in enumerate(in_specs):
        if len(set(spec)) != len(spec):
            raise ValueError(f"repeated index within operand {k}: {spec!r}")
        visible = set(out_spec) | set("".join(s for j, s in enumerate(in_specs) if j != k))
        if not set(spec) <= visible:
            raise ValueError(f"operand {k} has an index seen nowhere else: {spec!r}")

    arrays = [t.data for t in tensors]
    out = np.einsum(subscripts, *arrays, optimize=True)

    def backward(g):
        for k, t in enumerate(tensors):
            if not t.requires_grad:
                continue
            other_specs = [in_specs[j] for j in range(len(tensors)) if j != k]
            others = [arrays[j] for j in range(len(tensors)) if j != k]
            spec = ",".join([out_spec] + other_specs) + "->" + in_specs[k]
            _acc(t, np.einsum(spec, g, *others, optimize=True))

    return _node(out, tensors, backward)


def scale_channels(x: Tensor, gates: Tensor) -> Tensor:
    """Named broadcast: per-(frame, channel) gates over space.

    x is (T, C, H, W), gates is (T, C); returns x * gates[..., None, None].
    """
    if x.ndim != 4 or gates.ndim != 2 or x.shape[:2] != gates.shape:
        raise ValueError(f"cannot broadcast gates {gates.shape} over {x.shape}")
    return einsum("tchw,tc->tchw", x, gates)


def add_rowwise(x: Tensor, bias: Tensor) -> Tensor:
    """Named broadcast: add a length-C bias to every row of an (N, C) matrix."""
    if x.ndim != 2 or bias.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ValueError(f"cannot add bias {bias.shape} to rows of {x.shape}")

    def backward(g):
        _acc(x, g)
        _acc(bias, g.sum(axis=0))

    return _node(x.data + bias.data[None, :], (x, bias), backward)


# -- nonlinearities -------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    zero = a.data.dtype.type(0)
    out = np.where(a.data > 0, a.data, zero)

    def backward(g):
        _acc(a, g * (a.data > 0))

    return _node(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        _acc(a, g * out * (1.0 - out))

    return _node(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        _acc(a, g * (1.0 - out * out))

    return _node(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        _acc(a, g * out)

    return _node(out, (a,), backward)


def softmax_lastaxis(a: Tensor) -> Tensor:
    """Row-stochastic softmax along the last axis, max-subtracted for stability."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _acc(a, out * (g - inner))

    return _node(out, (a,), backward)


# -- the tape -----------------------------------------------------------------------


def _topo_order(root: Tensor) -> list:
    # iterative DFS post-order; nodes are marked when first expanded, not when
    # pushed, so shared subgraphs still come out in true topological order
    order, expanded_ids, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in expanded_ids:
            continue
        expanded_ids.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in expanded_ids:
                stack.append((p, False))
    return order  # leaves first, root last


class GradTape:
    """Named-parameter registry over one backward replay of the op graph.

    The graph itself is the ordered record of primitive applications; backward
    visits each recorded node exactly once, in reverse topological order. A
    tape is single-use: a second backward raises.
    """

    def __init__(self, params: Mapping[str, Tensor]):
        self._params = dict(params)
        self._consumed = False

    def backward(self, loss: Tensor) -> dict:
        if self._consumed:
            raise RuntimeError("gradient tape already consumed")
        if loss.shape != ():
            raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
        self._consumed = True
        for p in self._params.values():
            p.grad = None
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for node in reversed(_topo_order(loss)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:  # free intermediates, keep leaf grads
                node.grad = None
                node._backward = None
                node._parents = ()
        return {
            name: Tensor(p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self._params.items()
        }
