"""The compiled and pure-numpy kernel paths must agree."""

import numpy as np
import pytest

from uxenc import kernels


def test_place_taps_paths_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(120, 400))
        m = int(rng.integers(1, 30))
        delays = rng.uniform(0, n - 1, size=m)
        amps = rng.standard_normal(m)
        a = np.zeros(n)
        b = np.zeros(n)
        kernels._place_taps_loops(a, delays, amps, 40)
        kernels._place_taps_numpy(b, delays, amps, 40)
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_place_taps_integer_delay_single_tap():
    taps = np.zeros(100)
    kernels.place_taps(taps, np.array([37.0]), np.array([2.5]), 40)
    assert taps[37] == pytest.approx(2.5, abs=1e-12)
    others = np.delete(taps, 37)
    assert np.abs(others).max() < 1e-12


def test_ctc_paths_agree():
    rng = np.random.default_rng(1)
    for _ in range(25):
        t = int(rng.integers(2, 8))
        v = int(rng.integers(2, 5))
        u = int(rng.integers(0, min(3, t) + 1))
        targets = rng.integers(1, v, size=u) if u else np.zeros(0, dtype=np.int64)
        if 2 * u + 1 > 2 * t + 1:
            continue
        ext = np.zeros(2 * u + 1, dtype=np.int64)
        ext[1::2] = targets
        lp = np.log(rng.dirichlet(np.ones(v), size=t))
        a1, nll1 = kernels._ctc_alpha_loops(lp, ext)
        a2, nll2 = kernels._ctc_alpha_numpy(lp, ext)
        if not np.isfinite(nll1):
            assert not np.isfinite(nll2)
            continue
        assert nll1 == pytest.approx(nll2, rel=1e-10)
        g1, nllg1 = kernels._ctc_grad_loops(lp, ext)
        g2, nllg2 = kernels._ctc_grad_numpy(lp, ext)
        assert nllg1 == pytest.approx(nll1, rel=1e-10)
        np.testing.assert_allclose(g1, g2, atol=1e-10)


def test_ctc_posteriors_sum_to_one_per_frame():
    rng = np.random.default_rng(2)
    lp = np.log(rng.dirichlet(np.ones(4), size=6))
    ext = np.array([0, 2, 0, 3, 0])
    grad, nll = kernels.ctc_grad(lp, ext)
    np.testing.assert_allclose(grad.sum(axis=1), -1.0, atol=1e-9)


def test_levenshtein_paths_agree():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.integers(0, 4, size=int(rng.integers(0, 9)))
        b = rng.integers(0, 4, size=int(rng.integers(1, 9)))
        assert kernels._levenshtein_loops(a, b) == kernels._levenshtein_numpy(a, b)


def test_levenshtein_known_values():
    assert kernels.levenshtein(np.array([1, 2, 3]), np.array([1, 2, 3])) == 0
    assert kernels.levenshtein(np.array([1, 9, 3]), np.array([1, 2, 3])) == 1
    assert kernels.levenshtein(np.array([], dtype=np.int64), np.array([1, 2])) == 2


def test_kmeans_assign_paths_agree():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((40, 5))
    c = rng.standard_normal((6, 5))
    l1, d1 = kernels._kmeans_assign_loops(x, c)
    l2, d2 = kernels._kmeans_assign_numpy(x, c)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_allclose(d1, d2, rtol=1e-10)
