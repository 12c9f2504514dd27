"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``DRIFTNOISE_DISABLE_NUMBA=1`` before import to force the numpy path.
"""
import os

_FLAG = os.environ.get("DRIFTNOISE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise.

    The loop kernels stay importable (and callable, slowly) without numba so
    the two code paths can always be compared in tests.
    """
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
