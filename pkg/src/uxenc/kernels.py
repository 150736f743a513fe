"""Hot numeric kernels: numba ``@njit`` loops with pure-numpy fallbacks.

Four inner loops dominate runtime in this package and get both treatments:

* ``place_taps``     - scatter windowed-sinc arrivals into an impulse response
* ``ctc_alpha`` / ``ctc_grad`` - CTC forward recursion and posterior gradient
* ``levenshtein``    - word/char edit distance
* ``kmeans_assign``  - nearest-centroid search

The compiled and fallback paths implement the same arithmetic (same tie
rules, same accumulation order where it matters) and are asserted equivalent
in ``tests/test_kernels.py``.  The active path is chosen at import time by
:mod:`uxenc.backend` (env var ``UXENC_NUMBA``).
"""

import math

import numpy as np

from . import backend

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# Windowed-sinc tap placement
# ---------------------------------------------------------------------------

def _place_taps_loops(taps, delays, amps, half):
    L = taps.shape[0]
    for i in range(delays.shape[0]):
        tau = delays[i]
        a = amps[i]
        n0 = int(math.ceil(tau - half))
        for j in range(2 * half + 1):
            n = n0 + j
            x = n - tau
            if x > half:
                break
            if n < 0 or n >= L:
                continue
            if abs(x) < 1e-12:
                s = 1.0
            else:
                s = math.sin(math.pi * x) / (math.pi * x)
            w = 0.5 * (1.0 + math.cos(math.pi * x / (half + 1)))
            taps[n] += a * s * w


def _place_taps_numpy(taps, delays, amps, half):
    L = taps.shape[0]
    if delays.size == 0:
        return
    j = np.arange(2 * half + 1)
    n = np.ceil(delays - half).astype(np.int64)[:, None] + j[None, :]
    x = n - delays[:, None]
    valid = (np.abs(x) <= half) & (n >= 0) & (n < L)
    vals = amps[:, None] * np.sinc(x) * (0.5 * (1.0 + np.cos(np.pi * x / (half + 1))))
    np.add.at(taps, n[valid], vals[valid])


# ---------------------------------------------------------------------------
# CTC forward recursion and gradient (log domain, float64)
# ---------------------------------------------------------------------------

def _lae(a, b):
    # logaddexp with -inf short-circuits (numba-compatible)
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def _ctc_alpha_loops(log_probs, ext):
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _lae(acc, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != ext[s - 2]:
                acc = _lae(acc, alpha[t - 1, s - 2])
            alpha[t, s] = acc + log_probs[t, ext[s]]
    ll = alpha[T - 1, S - 1]
    if S > 1:
        ll = _lae(ll, alpha[T - 1, S - 2])
    return alpha, -ll


def _ctc_alpha_numpy(log_probs, ext):
    T = log_probs.shape[0]
    S = ext.shape[0]
    emit = log_probs[:, ext]                       # [T, S]
    skip_ok = np.zeros(S, dtype=np.bool_)
    if S > 2:
        skip_ok[2:] = ext[2:] != ext[:-2]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        if S > 2:
            acc[2:] = np.where(skip_ok[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]
    ll = alpha[T - 1, S - 1]
    if S > 1:
        ll = np.logaddexp(ll, alpha[T - 1, S - 2])
    return alpha, -float(ll)


def _ctc_grad_loops(log_probs, ext):
    T = log_probs.shape[0]
    S = ext.shape[0]
    V = log_probs.shape[1]
    alpha, nll = _ctc_alpha_loops(log_probs, ext)
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        for s in range(S):
            acc = beta[t + 1, s] + log_probs[t + 1, ext[s]]
            if s + 1 < S:
                acc = _lae(acc, beta[t + 1, s + 1] + log_probs[t + 1, ext[s + 1]])
            if s + 2 < S and ext[s + 2] != ext[s]:
                acc = _lae(acc, beta[t + 1, s + 2] + log_probs[t + 1, ext[s + 2]])
            beta[t, s] = acc
    logz = -nll
    grad = np.zeros((T, V))
    for t in range(T):
        for s in range(S):
            g = alpha[t, s] + beta[t, s] - logz
            if g > -745.0:  # exp underflow guard
                grad[t, ext[s]] -= math.exp(g)
    return grad, nll


def _ctc_grad_numpy(log_probs, ext):
    T = log_probs.shape[0]
    S = ext.shape[0]
    V = log_probs.shape[1]
    emit = log_probs[:, ext]
    skip_ok = np.zeros(S, dtype=np.bool_)
    if S > 2:
        skip_ok[2:] = ext[2:] != ext[:-2]
    alpha, nll = _ctc_alpha_numpy(log_probs, ext)
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        if S > 2:
            acc[:-2] = np.where(skip_ok[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc
    post = np.exp(np.maximum(alpha + beta + nll, -745.0)) * np.isfinite(alpha + beta)
    grad = np.zeros((T, V))
    rows = np.repeat(np.arange(T), S)
    np.add.at(grad, (rows, np.tile(ext, T)), -post.ravel())
    return grad, nll


# ---------------------------------------------------------------------------
# Edit distance
# ---------------------------------------------------------------------------

def _levenshtein_loops(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.arange(m + 1)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[m])


def _levenshtein_numpy(a, b):
    # row-wise DP; insertion dependency resolved with a minimum-accumulate pass
    n = a.shape[0]
    m = b.shape[0]
    prev = np.arange(m + 1)
    jj = np.arange(m + 1)
    for i in range(1, n + 1):
        sub = prev[:-1] + (a[i - 1] != b)
        cur = np.empty(m + 1, dtype=np.int64)
        cur[0] = i
        cur[1:] = np.minimum(sub, prev[1:] + 1)
        cur = np.minimum.accumulate(cur - jj) + jj
        prev = cur
    return int(prev[m])


# ---------------------------------------------------------------------------
# Nearest-centroid assignment
# ---------------------------------------------------------------------------

def _kmeans_assign_loops(X, C):
    n = X.shape[0]
    k = C.shape[0]
    d = X.shape[1]
    labels = np.zeros(n, dtype=np.int64)
    dists = np.zeros(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for j in range(d):
                diff = X[i, j] - C[c, j]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        dists[i] = best
    return labels, dists


def _kmeans_assign_numpy(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(X.shape[0]), labels]


# ---------------------------------------------------------------------------
# Path selection
# ---------------------------------------------------------------------------

if backend.USE_NUMBA:
    # Rebind the helpers the jitted bodies call by global name, so numba's
    # lazy compilation resolves them to compiled versions.
    _lae = backend.njit(_lae)
    _ctc_alpha_loops = backend.njit(_ctc_alpha_loops)
    place_taps = backend.njit(_place_taps_loops)
    ctc_alpha = _ctc_alpha_loops
    ctc_grad = backend.njit(_ctc_grad_loops)
    levenshtein = backend.njit(_levenshtein_loops)
    kmeans_assign = backend.njit(_kmeans_assign_loops)
else:
    place_taps = _place_taps_numpy
    ctc_alpha = _ctc_alpha_numpy
    ctc_grad = _ctc_grad_numpy
    levenshtein = _levenshtein_numpy
    kmeans_assign = _kmeans_assign_numpy
