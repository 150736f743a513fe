"""Finite-difference verification of every differentiable primitive.

The oracle is forward-only: central differences with step ``h`` on float64
copies of the inputs, compared against the tape's analytic gradients.  The
same suite backs ``tests/test_diffkernel.py`` and the ``grad-check`` CLI
command.
"""

import numpy as np

from . import ops
from .tape import Tensor, concat, mean, mul, reduce_sum, reshape, take, transpose

DEFAULT_H = 1e-4


def finite_difference_grad(fn, arrays, h=DEFAULT_H):
    """Central-difference gradient of scalar ``fn(arrays)`` w.r.t. each array."""
    grads = []
    for i, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = fn(arrays)
            flat[j] = orig - h
            f_minus = fn(arrays)
            flat[j] = orig
            gflat[j] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, arrays, h=DEFAULT_H):
    """Max relative error between tape gradients and finite differences.

    ``build_loss(tensors) -> scalar Tensor`` where ``tensors`` wrap float64
    copies of ``arrays`` with ``requires_grad``.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def forward_only(arrs):
        return build_loss([Tensor(a) for a in arrs]).item()

    numeric = finite_difference_grad(forward_only, arrays, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.abs(a).max(), np.abs(n).max(), 1e-8)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


def _weighted(out, rng):
    """Reduce any tensor to a scalar with fixed random weights (full-Jacobian probe)."""
    w = rng.standard_normal(out.shape)
    return reduce_sum(mul(out, w))


def primitive_suite(seed=0, h=DEFAULT_H):
    """Gradient-check every primitive on random double-precision instances.

    Returns ``{name: max_relative_error}`` over 10 instances each.
    """
    results = {}

    def run(name, make_case):
        worst = 0.0
        for trial in range(10):
            rng = np.random.default_rng([seed, trial, abs(hash(name)) % (2 ** 32)])
            build, arrays = make_case(rng)
            worst = max(worst, check_gradients(build, arrays, h=h))
        results[name] = worst

    run("linear", lambda rng: (
        lambda ts: _weighted(ops.linear(ts[0], ts[1], ts[2]), np.random.default_rng(1)),
        [rng.standard_normal((5, 4)), rng.standard_normal((4, 3)), rng.standard_normal(3)]))

    run("conv1d", lambda rng: (
        lambda ts: _weighted(ops.conv1d(ts[0], ts[1], ts[2], stride=3), np.random.default_rng(2)),
        [rng.standard_normal((3, 20)), rng.standard_normal((4, 3, 5)), rng.standard_normal(4)]))

    run("layer_norm", lambda rng: (
        lambda ts: _weighted(ops.layer_norm(ts[0], ts[1], ts[2]), np.random.default_rng(3)),
        [rng.standard_normal((6, 8)), 1.0 + 0.1 * rng.standard_normal(8), rng.standard_normal(8)]))

    run("gelu", lambda rng: (
        lambda ts: _weighted(ops.gelu(ts[0]), np.random.default_rng(4)),
        [rng.standard_normal((5, 7))]))

    run("sigmoid", lambda rng: (
        lambda ts: _weighted(ops.sigmoid(ts[0]), np.random.default_rng(5)),
        [rng.standard_normal((5, 7))]))

    run("softmax", lambda rng: (
        lambda ts: _weighted(ops.softmax(ts[0], axis=-1), np.random.default_rng(6)),
        [rng.standard_normal((6, 5))]))

    run("log_softmax", lambda rng: (
        lambda ts: _weighted(ops.log_softmax(ts[0], axis=-1), np.random.default_rng(7)),
        [rng.standard_normal((6, 5))]))

    run("scaled_dot_attention", lambda rng: (
        lambda ts: _weighted(ops.scaled_dot_attention(ts[0], ts[1], ts[2], bias=ts[3]),
                             np.random.default_rng(8)),
        [rng.standard_normal((2, 4, 6)), rng.standard_normal((2, 5, 6)),
         rng.standard_normal((2, 5, 3)), 0.5 * rng.standard_normal((2, 4, 5))]))

    run("embedding_lookup", lambda rng: (
        lambda ts: _weighted(ops.embedding_lookup(ts[0], np.array([0, 2, 2, 5, 1])),
                             np.random.default_rng(9)),
        [rng.standard_normal((7, 4))]))

    run("mean", lambda rng: (
        lambda ts: _weighted(mean(ts[0], axis=0), np.random.default_rng(10)),
        [rng.standard_normal((4, 6))]))

    run("cosine_similarity", lambda rng: (
        lambda ts: _weighted(ops.cosine_similarity(ts[0], ts[1]), np.random.default_rng(11)),
        [rng.standard_normal((5, 6)), rng.standard_normal((5, 6))]))

    def lstm_case(rng):
        def build(ts):
            h_next, c_next = ops.lstm_cell(ts[0], ts[1], ts[2], ts[3], ts[4], ts[5])
            r = np.random.default_rng(12)
            return reduce_sum(mul(h_next, r.standard_normal(h_next.shape))) + \
                reduce_sum(mul(c_next, r.standard_normal(c_next.shape)))
        return build, [rng.standard_normal((1, 4)), rng.standard_normal((1, 5)),
                       rng.standard_normal((1, 5)), rng.standard_normal((4, 20)),
                       rng.standard_normal((5, 20)), rng.standard_normal(20)]

    run("recurrent_cell", lstm_case)

    run("matmul", lambda rng: (
        lambda ts: _weighted(ts[0] @ ts[1], np.random.default_rng(13)),
        [rng.standard_normal((3, 4)), rng.standard_normal((4, 5))]))

    run("take", lambda rng: (
        lambda ts: _weighted(take(ts[0], np.array([[0, 2], [1, 1]]), axis=1),
                             np.random.default_rng(14)),
        [rng.standard_normal((3, 4, 2))]))

    run("concat_reshape_transpose", lambda rng: (
        lambda ts: _weighted(
            transpose(reshape(concat([ts[0], ts[1]], axis=1), (2, 3, 2)), (1, 0, 2)),
            np.random.default_rng(15)),
        [rng.standard_normal((2, 4)), rng.standard_normal((2, 2))]))

    run("composed_linear_gelu_layer_norm", lambda rng: (
        lambda ts: _weighted(
            ops.layer_norm(ops.gelu(ops.linear(ts[0], ts[1], ts[2])), ts[3], ts[4]),
            np.random.default_rng(16)),
        [rng.standard_normal((4, 5)), rng.standard_normal((5, 6)), rng.standard_normal(6),
         1.0 + 0.1 * rng.standard_normal(6), rng.standard_normal(6)]))

    return results
