"""Backend switch for the compiled kernels.

Set ``EEPPR_DISABLE_NUMBA=1`` before importing eeppr to force the pure-numpy
code path (useful for debugging and for benchmarking the two backends).
"""

import os

DISABLE_ENV = "EEPPR_DISABLE_NUMBA"

_disabled = os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    njit = None

USE_NUMBA = HAVE_NUMBA and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(fn):
    """Compile ``fn`` in nopython/nogil mode when numba is installed.

    The undecorated function is returned otherwise, so callers may always
    hold a reference to the result.
    """
    if not HAVE_NUMBA:
        return fn
    return njit(cache=True, nogil=True)(fn)
