"""Optional numba acceleration.

Hot numerical kernels are written in a numba-compatible subset of
Python. When numba is available they are compiled; otherwise they run
as plain Python with identical semantics (much slower, used only as a
fallback).
"""

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


__all__ = ["njit", "HAVE_NUMBA"]
