"""Numba/numpy lane selection for the hot kernels.

The environment variable SLOWFAST_SPDE_BACKEND picks the lane:

* ``auto`` (default) -- numba if importable, else numpy
* ``numba``          -- require numba, raise if missing
* ``numpy``          -- force the pure-numpy fallback

Both lanes produce identical results up to floating-point summation order;
each lane is bit-deterministic on its own.
"""

import os

_ENV_VAR = "SLOWFAST_SPDE_BACKEND"


def _resolve() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice in ("numpy", "python"):
        return "numpy"
    if choice in ("auto", "", "numba"):
        try:
            import numba  # noqa: F401
        except ImportError:
            if choice == "numba":
                raise RuntimeError(
                    f"{_ENV_VAR}=numba requested but numba is not importable"
                )
            return "numpy"
        return "numba"
    raise RuntimeError(
        f"unrecognized {_ENV_VAR}={choice!r}; expected auto, numba or numpy"
    )


BACKEND = _resolve()
USE_NUMBA = BACKEND == "numba"


def jit(func):
    """Apply @njit in the numba lane; return the function unchanged otherwise."""
    if USE_NUMBA:
        from numba import njit

        return njit(cache=True, nogil=True)(func)
    return func
