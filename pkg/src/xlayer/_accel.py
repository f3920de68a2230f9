"""Backend switch for the hot kernels.

Kernels are written once as plain loops and compiled with numba when it is
available. Setting ``XLAYER_NUMBA=0`` (or calling :func:`set_backend`) routes
calls to the pure-numpy path instead.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSY = {"0", "false", "no", "off"}

_backend = "numba"
if numba is None or os.environ.get("XLAYER_NUMBA", "1").strip().lower() in _FALSY:
    _backend = "numpy"


def njit(fn):
    """Compile ``fn`` lazily; the original stays reachable as ``.py_func``."""
    if numba is None:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return _backend


def set_backend(name):
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def use_numba():
    return _backend == "numba"
