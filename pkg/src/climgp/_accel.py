"""Backend selection for the hot kernels.

Set ``CLIMGP_NO_NUMBA=1`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_disabled():
    return os.environ.get("CLIMGP_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` or the identity when numba is absent."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
