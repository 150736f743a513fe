"""Reverse-mode tape over numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional backward closure; calling
``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates gradients into every reachable tensor with
``requires_grad``.  Compute dtype follows the inputs (float32 for training,
float64 for verification builds); forward passes are deterministic.

Only the machinery the encoder and heads need lives here; the model-facing
primitives are composed in :mod:`uxenc.diffkernel.ops`.
"""

import numpy as np

from ..errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward", "implicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in _reverse_topo(self):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward_fn(node.grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                if pgrad.shape != parent.data.shape:
                    pgrad = _unbroadcast(pgrad, parent.data.shape)
                parent.grad = pgrad if parent.grad is None else parent.grad + pgrad

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _reverse_topo(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return reversed(order)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None and arr.dtype != dtype and arr.dtype.kind == "f":
        arr = arr.astype(dtype)
    elif dtype is not None and arr.dtype.kind in "iu" and np.isscalar(x):
        arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def tensor(data, requires_grad=False, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# Core arithmetic
# ---------------------------------------------------------------------------

def _pair(a, b):
    """Wrap operands; python scalars adopt the tensor operand's float dtype."""
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a.dtype)
    if isinstance(b, Tensor):
        return _as_tensor(a, b.dtype), b
    return _as_tensor(a), _as_tensor(b)


def add(a, b):
    a, b = _pair(a, b)
    out_data = a.data + b.data
    return Tensor(out_data, parents=(a, b), backward_fn=lambda g: (g, g))


def sub(a, b):
    a, b = _pair(a, b)
    out_data = a.data - b.data
    return Tensor(out_data, parents=(a, b), backward_fn=lambda g: (g, -g))


def mul(a, b):
    a, b = _pair(a, b)
    out_data = a.data * b.data
    return Tensor(out_data, parents=(a, b),
                  backward_fn=lambda g: (g * b.data, g * a.data))


def div(a, b):
    a, b = _pair(a, b)
    out_data = a.data / b.data
    return Tensor(out_data, parents=(a, b),
                  backward_fn=lambda g: (g / b.data, -g * a.data / (b.data * b.data)))


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be >= 2-D, got {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def maximum(a, b):
    a, b = _pair(a, b)
    out_data = np.maximum(a.data, b.data)
    mask = a.data >= b.data

    def backward(g):
        return g * mask, g * ~mask

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def minimum(a, b):
    a, b = _pair(a, b)
    out_data = np.minimum(a.data, b.data)
    mask = a.data <= b.data

    def backward(g):
        return g * mask, g * ~mask

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


# ---------------------------------------------------------------------------
# Shape manipulation
# ---------------------------------------------------------------------------

def reshape(x, shape):
    x = _as_tensor(x)
    out_data = x.data.reshape(shape)
    return Tensor(out_data, parents=(x,),
                  backward_fn=lambda g: (g.reshape(x.data.shape),))


def transpose(x, axes):
    x = _as_tensor(x)
    inv = np.argsort(axes)
    return Tensor(x.data.transpose(axes), parents=(x,),
                  backward_fn=lambda g: (g.transpose(inv),))


def concat(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes[:-1])

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_data, parents=tuple(parts), backward_fn=backward)


def stack(parts, axis=0):
    parts = [_as_tensor(p) for p in parts]
    out_data = np.stack([p.data for p in parts], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return Tensor(out_data, parents=tuple(parts), backward_fn=backward)


def getitem(x, key):
    x = _as_tensor(x)
    out_data = x.data[key]
    fancy = isinstance(key, np.ndarray) or (
        isinstance(key, tuple) and any(isinstance(k, np.ndarray) for k in key))

    def backward(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, key, g)
        else:
            gx[key] += g
        return (gx,)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def take(x, indices, axis):
    """np.take with gradient scatter-add; indices may be any integer ndarray."""
    x = _as_tensor(x)
    indices = np.asarray(indices)
    out_data = np.take(x.data, indices, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        gx_front = np.moveaxis(gx, axis, 0)
        # gradient axes: x.shape[:axis] + indices.shape + x.shape[axis+1:]
        g_moved = np.moveaxis(g, tuple(range(axis, axis + indices.ndim)),
                              tuple(range(indices.ndim)))
        np.add.at(gx_front, indices, g_moved)
        return (gx,)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


# ---------------------------------------------------------------------------
# Reductions and elementwise transcendentals
# ---------------------------------------------------------------------------

def reduce_sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    if axis is None:
        count = x.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([x.data.shape[a] for a in axis]))
    else:
        count = x.data.shape[axis]
    return mul(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def exp(x):
    x = _as_tensor(x)
    out_data = np.exp(x.data)
    return Tensor(out_data, parents=(x,), backward_fn=lambda g: (g * out_data,))


def log(x):
    x = _as_tensor(x)
    return Tensor(np.log(x.data), parents=(x,),
                  backward_fn=lambda g: (g / x.data,))


def sqrt(x):
    x = _as_tensor(x)
    out_data = np.sqrt(x.data)
    return Tensor(out_data, parents=(x,),
                  backward_fn=lambda g: (g * 0.5 / out_data,))


def tanh(x):
    x = _as_tensor(x)
    out_data = np.tanh(x.data)
    return Tensor(out_data, parents=(x,),
                  backward_fn=lambda g: (g * (1.0 - out_data * out_data),))
