"""Backend switch for the hot loops.

``COULOMB_LAB_BACKEND=numpy`` forces the vectorised numpy fallbacks;
anything else (default ``numba``) uses the compiled kernels when numba
imports.  ``COULOMB_LAB_THREADS`` caps the worker count.
"""

import os

_requested = os.environ.get("COULOMB_LAB_BACKEND", "numba").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
BACKEND = "numba" if (HAVE_NUMBA and _requested != "numpy") else "numpy"


def thread_cap():
    raw = os.environ.get("COULOMB_LAB_THREADS")
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


if HAVE_NUMBA:
    njit = _numba.njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def use_numba(backend=None):
    """Resolve an explicit per-call override against the global flag."""
    if backend is None:
        return BACKEND == "numba"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba" and HAVE_NUMBA
