"""numba switch for the hot kernels.

Set ``FCMAC_NO_NUMBA=1`` to run every kernel as plain Python over numpy
arrays.  Both paths execute the same source, so results are bit-identical.
"""
import os

NUMBA_DISABLED = os.environ.get("FCMAC_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_ENABLED = numba is not None and not NUMBA_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise the identity decorator."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
