"""Numba switch.

Set ``BAYESFBLIN_NUMBA=0`` before import to run every hot kernel as plain
Python/numpy. Numba's own ``NUMBA_DISABLE_JIT=1`` is honoured as well.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("BAYESFBLIN_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency but stay importable
    numba = None

USE_NUMBA = (
    numba is not None
    and _FLAG not in ("0", "false", "no", "off")
    and not numba.config.DISABLE_JIT
)


def maybe_njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""

    def wrap(fn):
        if USE_NUMBA:
            return numba.njit(cache=True, **kwargs)(fn)
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
