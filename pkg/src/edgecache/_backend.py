"""Kernel backend selection: numba-compiled hot loops with a numpy fallback.

The heavy inner loops (greedy schedule scan, periodic rescheduling loop,
simplex pivoting) are written as plain array code and decorated with
``maybe_njit``.  By default they are JIT-compiled with numba; setting the
environment variable ``EDGECACHE_NUMBA=0`` before import selects the pure
numpy/Python fallback, which runs the identical code uncompiled.  The
benchmark script under ``benchmarks/`` compares the two paths.
"""

from __future__ import annotations

import os

_env = os.environ.get("EDGECACHE_NUMBA", "1").strip().lower()
_want_numba = _env not in ("0", "false", "no", "off")

if _want_numba:
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and _want_numba


def maybe_njit(*args, **kwargs):
    """Return numba.njit when enabled, otherwise an identity decorator."""
    if USING_NUMBA:
        import numba

        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def deco(fn):
        return fn

    return deco


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
