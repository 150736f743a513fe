"""Numba / pure-numpy backend selection.

Hot kernels in :mod:`uxenc.kernels` exist in two flavours: a numba ``@njit``
compiled loop version and a vectorised pure-numpy fallback.  Selection happens
once at import time:

* ``UXENC_NUMBA=0`` (or ``false``/``no``) forces the numpy fallback;
* otherwise numba is used when importable.

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

import os

_FALSY = {"0", "false", "no", "off"}


def _env_wants_numba():
    return os.environ.get("UXENC_NUMBA", "1").strip().lower() not in _FALSY


HAVE_NUMBA = False
if _env_wants_numba():
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def njit(func):
    """``numba.njit`` (no fastmath: kernels must stay bit-stable per path)."""
    from numba import njit as _njit

    return _njit(cache=True)(func)
