"""Differentiable primitives for the encoder and downstream heads.

Each function takes and returns tape :class:`~uxenc.diffkernel.tape.Tensor`
objects; backward passes are the exact vector-Jacobian products of the
forwards and are verified against central finite differences in the gradcheck
suite.
"""

import math

import numpy as np
import scipy.special

from ..errors import ShapeError
from .tape import (
    Tensor,
    _as_tensor,
    add,
    div,
    maximum,
    matmul,
    mul,
    reduce_sum,
    reshape,
    sqrt,
    take,
    tanh,
    transpose,
)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with ``x [..., D_in]``, ``weight [D_in, D_out]``."""
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", f"input dim {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def conv1d(x, weight, bias=None, stride=1):
    """Valid (no padding) strided 1-D convolution.

    ``x [C_in, N]`` or batched ``[B, C_in, N]``, ``weight [C_out, C_in, K]``
    -> ``[C_out, T]`` / ``[B, C_out, T]`` with ``T = (N - K) // stride + 1``.
    Batch entries share weights (the per-channel CNN path).
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    if x.ndim not in (2, 3) or weight.ndim != 3:
        raise ShapeError("conv1d", f"expected x [(B,) C_in, N] and weight "
                                   f"[C_out, C_in, K], got {x.shape} and {weight.shape}")
    batched = x.ndim == 3
    xd = x.data if batched else x.data[None]
    b, c_in, n = xd.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError("conv1d", f"input channels {c_in} != weight channels {c_in_w}")
    if n < k:
        raise ShapeError("conv1d", f"input length {n} shorter than kernel {k}")
    t = (n - k) // stride + 1
    idx = np.arange(t)[:, None] * stride + np.arange(k)[None, :]   # [T, K]
    cols = xd[:, :, idx]                                           # [B, C_in, T, K]
    cols2 = cols.transpose(0, 2, 1, 3).reshape(b * t, c_in * k)    # [B*T, C_in*K]
    w2 = weight.data.reshape(c_out, c_in * k)
    out_data = (cols2 @ w2.T).reshape(b, t, c_out).transpose(0, 2, 1)
    if not batched:
        out_data = out_data[0]

    def backward(g):
        g3 = (g if batched else g[None]).transpose(0, 2, 1).reshape(b * t, c_out)
        gw = (g3.T @ cols2).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g3 @ w2).reshape(b, t, c_in, k).transpose(0, 2, 1, 3)
            gxd = np.zeros_like(xd)
            # col2im: for each kernel offset the window positions are disjoint,
            # so K strided slice-adds replace a scatter
            for kk in range(k):
                gxd[:, :, kk:kk + stride * t:stride] += gcols[:, :, :, kk]
            gx = gxd if batched else gxd[0]
        return gx, gw

    out = Tensor(out_data, parents=(x, weight), backward_fn=backward)
    if bias is not None:
        shape = (c_out, 1) if not batched else (1, c_out, 1)
        out = add(out, reshape(_as_tensor(bias), shape))
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x = _as_tensor(x)
    gain = _as_tensor(gain)
    bias = _as_tensor(bias)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out_data = gain.data * xhat + bias.data

    def backward(g):
        reduce_axes = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=reduce_axes)
        g_bias = g.sum(axis=reduce_axes)
        gxhat = g * gain.data
        gx = (gxhat - gxhat.mean(axis=-1, keepdims=True)
              - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)) * inv_std
        return gx, g_gain, g_bias

    return Tensor(out_data, parents=(x, gain, bias), backward_fn=backward)


def gelu(x):
    """Exact (erf-based) Gaussian error linear unit."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + scipy.special.erf(x.data / math.sqrt(2.0)))
    out_data = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * pdf),)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def sigmoid(x):
    x = _as_tensor(x)
    z = x.data
    out_data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - inner) * out_data,)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def log_softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z
    probs = np.exp(out_data)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def scaled_dot_attention(q, k, v, bias=None):
    """``softmax(q k^T / sqrt(d) + bias) v`` over the last two axes.

    ``q [..., n, d]``, ``k [..., m, d]``, ``v [..., m, dv]``; ``bias`` (if
    given) broadcasts against the ``[..., n, m]`` score matrix and is the hook
    for both relative-position terms and additive masks.
    """
    q = _as_tensor(q)
    k = _as_tensor(k)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError("scaled_dot_attention",
                         f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    d = q.shape[-1]
    scores = mul(matmul(q, _swap_last(k)), 1.0 / math.sqrt(d))
    if bias is not None:
        scores = add(scores, bias)
    return matmul(softmax(scores, axis=-1), v)


def _swap_last(x):
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def embedding_lookup(table, ids):
    """Row lookup ``table[ids]`` with scatter-add gradient into the table."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ShapeError("embedding_lookup", f"ids must be integers, got {ids.dtype}")
    return take(table, ids, axis=0)


def cosine_similarity(a, b, axis=-1, eps=1e-8):
    """Cosine similarity along ``axis``; zero-norm inputs yield 0 with finite grads."""
    a = _as_tensor(a)
    b = _as_tensor(b)
    dot = reduce_sum(mul(a, b), axis=axis)
    norm_a = sqrt(add(reduce_sum(mul(a, a), axis=axis), eps * eps))
    norm_b = sqrt(add(reduce_sum(mul(b, b), axis=axis), eps * eps))
    denom = maximum(mul(norm_a, norm_b), eps)
    return div(dot, denom)


def lstm_cell(x, h, c, w_x, w_h, bias):
    """One LSTM step.

    ``x [B, D_in]``, ``h/c [B, H]``, ``w_x [D_in, 4H]``, ``w_h [H, 4H]``,
    ``bias [4H]``; gate order (input, forget, cell, output).  Returns
    ``(h_next, c_next)``.
    """
    x = _as_tensor(x)
    h = _as_tensor(h)
    c = _as_tensor(c)
    hidden = h.shape[-1]
    z = add(add(matmul(x, w_x), matmul(h, w_h)), bias)
    i_gate = sigmoid(z[:, 0 * hidden:1 * hidden])
    f_gate = sigmoid(z[:, 1 * hidden:2 * hidden])
    g_cell = tanh(z[:, 2 * hidden:3 * hidden])
    o_gate = sigmoid(z[:, 3 * hidden:4 * hidden])
    c_next = add(mul(f_gate, c), mul(i_gate, g_cell))
    h_next = mul(o_gate, tanh(c_next))
    return h_next, c_next
