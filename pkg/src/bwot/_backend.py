"""Select between numba-compiled kernels and their numpy fallbacks.

Set ``BWOT_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to force
the pure-numpy code paths. The choice is made once, at import time.
"""
import os

_FALSY = ("", "0", "false", "no", "off")


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    if _flag("BWOT_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"):
        raise ImportError("numba disabled by environment")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit(**options):
    """``numba.njit(**options)`` when numba is active, else ``None``.

    Kernels compiled through this decorator are only ever called when
    ``HAVE_NUMBA`` is true, so the fallback never needs a callable.
    """

    def deco(func):
        if not HAVE_NUMBA:
            return None
        return numba.njit(**options)(func)

    return deco
