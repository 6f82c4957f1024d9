"""Kernel dispatch: numba-jitted hot loops with a pure-numpy fallback.

The fallback is selected by setting ``CASCADEFIT_NO_NUMBA=1`` in the
environment before import (or automatically when numba is missing).
Kernels are written in loop-explicit numpy so the exact same source runs
on both paths; only the decorator changes.
"""

import os

_flag = os.environ.get("CASCADEFIT_NO_NUMBA", "0").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes")

if NUMBA_REQUESTED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """Identity decorator standing in for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
