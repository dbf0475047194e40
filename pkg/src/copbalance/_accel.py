"""Kernel backend selection: numba JIT or pure numpy/Python.

The hot numeric kernels in :mod:`copbalance._kernels` are written as plain
Python functions over numpy arrays and compiled with ``numba.njit`` when
available.  Set ``COPBALANCE_BACKEND=numpy`` to force the uncompiled path
(useful for debugging and as the reference in ``benchmarks/``);
``COPBALANCE_BACKEND=numba`` fails loudly if numba cannot be imported.
"""

import os

_ENV_VAR = "COPBALANCE_BACKEND"


def _pick_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        import numba  # noqa: F401  (raise ImportError here if missing)

        return "numba"
    if choice not in ("", "auto"):
        raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {choice!r}")
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _pick_backend()


def jit_kernel(func):
    """Compile ``func`` with njit under the numba backend, else return it as-is."""
    if BACKEND == "numba":
        from numba import njit

        return njit(cache=True)(func)
    return func
