"""Gradient oracles for the differentiable substrate."""

import numpy as np
import pytest

from uxenc import diffkernel as dk
from uxenc.diffkernel import check_gradients, primitive_suite
from uxenc.errors import ConfigurationError, ShapeError


def test_every_primitive_passes_finite_differences():
    results = primitive_suite()
    for name, err in results.items():
        assert err <= 1e-4, f"{name}: max relative error {err:.3e}"


def test_linear_identity_weight_is_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 4))
    out = dk.linear(dk.tensor(x), dk.tensor(np.eye(4)), dk.tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, x)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    out = dk.softmax(dk.tensor(rng.standard_normal((7, 9))), axis=1)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


def test_broadcast_add_gradient():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((4, 3))
    err = check_gradients(
        lambda ts: dk.reduce_sum(dk.mul(dk.add(ts[0], ts[1]), w)),
        [rng.standard_normal((4, 3)), rng.standard_normal(3)])
    assert err <= 1e-6


def test_shape_error_names_primitive():
    with pytest.raises(ShapeError) as exc:
        dk.linear(dk.tensor(np.zeros((2, 3))), dk.tensor(np.zeros((4, 2))))
    assert "linear" in str(exc.value)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 8)).astype(np.float32)
    w = rng.standard_normal((8, 8)).astype(np.float32)
    a = dk.softmax(dk.matmul(dk.tensor(x), dk.tensor(w)), axis=1).data
    b = dk.softmax(dk.matmul(dk.tensor(x), dk.tensor(w)), axis=1).data
    np.testing.assert_array_equal(a, b)


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        p = dk.Parameter(np.ones(3), "p")
        state = dk.AdamState()
        dk.adam_step([p], state, lr=0.1)
        np.testing.assert_array_equal(p.data, np.ones(3))

    def test_first_step_hand_evaluated(self):
        # g=1, betas (0.9, 0.999): m_hat = 1, v_hat = 1 -> delta = -lr/(1+eps)
        p = dk.Parameter(np.zeros(1), "p")
        p.grad = np.ones(1)
        state = dk.AdamState()
        dk.adam_step([p], state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8)
        assert p.data[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-9)

    def test_constant_gradient_step_converges_to_lr(self):
        p = dk.Parameter(np.zeros(1), "p")
        state = dk.AdamState()
        prev = 0.0
        for _ in range(3000):
            p.grad = np.full(1, 2.5)
            prev = p.data[0]
            dk.adam_step([p], state, lr=1e-3)
            p.grad = None
        assert abs(prev - p.data[0]) == pytest.approx(1e-3, rel=1e-3)


class TestLrSchedule:
    def test_endpoints(self):
        assert dk.lr_schedule(0, 100, 1000, 5e-4) == 0.0
        assert dk.lr_schedule(100, 100, 1000, 5e-4) == pytest.approx(5e-4)
        assert dk.lr_schedule(1000, 100, 1000, 5e-4) == 0.0

    def test_linear_segments(self):
        assert dk.lr_schedule(50, 100, 1000, 4e-4) == pytest.approx(2e-4)
        assert dk.lr_schedule(550, 100, 1000, 4e-4) == pytest.approx(2e-4)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            dk.lr_schedule(5, 100, 50, 1e-3)
        with pytest.raises(ConfigurationError):
            dk.lr_schedule(60, 10, 50, 1e-3)


def test_gradient_accumulates_across_backwards():
    p = dk.Parameter(np.array([2.0]), "p")
    for _ in range(3):
        loss = dk.mul(p, 4.0)
        loss.backward(np.ones(1))
    np.testing.assert_allclose(p.grad, [12.0])
