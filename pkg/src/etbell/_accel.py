"""Optional numba acceleration.

Set ``ETBELL_DISABLE_NUMBA=1`` to force the pure-numpy kernels; numba is
also skipped silently when it cannot be imported.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("ETBELL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    NUMBA_AVAILABLE = False

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


def use_numba() -> bool:
    return NUMBA_AVAILABLE
