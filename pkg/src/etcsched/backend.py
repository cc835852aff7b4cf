"""Numba/numpy backend selection for the hot numeric kernels.

Two kernel families dominate runtime: the trigger-time integrators in
``_timing`` and the DBM closure loops in ``_dbm``.  Both ship a numba
``@njit`` path and a pure-numpy path with identical semantics.  Selection:

* ``ETCSCHED_BACKEND=numpy``  force the pure-numpy fallback,
* ``ETCSCHED_BACKEND=numba``  force numba (ImportError if unavailable),
* unset                       numba when importable, numpy otherwise.

``benchmarks/bench_backends.py`` compares the two paths.
"""

import os

_CHOICE = os.environ.get("ETCSCHED_BACKEND", "").strip().lower()

if _CHOICE not in ("", "numba", "numpy"):
    raise ValueError(
        "ETCSCHED_BACKEND must be 'numba' or 'numpy', got %r" % _CHOICE
    )

if _CHOICE == "numpy":
    NUMBA_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _CHOICE == "numba":
            raise
        NUMBA_ENABLED = False


def jit(func):
    """Apply ``numba.njit(cache=True)`` on the numba path, else no-op."""
    if NUMBA_ENABLED:
        from numba import njit

        return njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
