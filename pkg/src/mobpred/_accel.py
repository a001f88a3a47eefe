"""Numba switch.

Set ``MOBPRED_DISABLE_NUMBA=1`` to run every kernel on its pure-numpy path.
The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("MOBPRED_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` in nopython mode, or return None when numba is absent."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)
