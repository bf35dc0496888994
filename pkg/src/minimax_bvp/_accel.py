"""Optional numba acceleration.

Kernels are written in a numba-compatible subset of numpy. When numba is
missing, or ``MINIMAX_BVP_DISABLE_NUMBA`` is set to a truthy value, the
decorator returns the plain Python function and the same code runs on numpy.
"""
from __future__ import annotations

import os

_FLAG = "MINIMAX_BVP_DISABLE_NUMBA"

try:
    from numba import njit as _njit

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover
    NUMBA_INSTALLED = False


def numba_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = NUMBA_INSTALLED and not numba_disabled()


def optional_njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""

    def decorator(func):
        if USE_NUMBA:
            return _njit(*args, **kwargs)(func)
        return func

    return decorator


def python_impl(func):
    """Return the uncompiled Python body of a kernel (used by the benchmark)."""
    return getattr(func, "py_func", func)
