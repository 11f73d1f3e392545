"""Numba switch.

Set ``DELTASTORE_DISABLE_JIT=1`` to run every kernel through its pure-numpy
implementation. Numba kernels are still importable (for tests and benchmarks)
whenever numba itself is installed.
"""

import functools
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

JIT_DISABLED = os.environ.get("DELTASTORE_DISABLE_JIT", "").lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not JIT_DISABLED


def njit(fn=None, **kwargs):
    """``numba.njit`` with the package defaults; identity when numba is missing."""
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)
    if fn is None:
        return functools.partial(njit, **kwargs)
    if not HAVE_NUMBA:  # pragma: no cover
        return fn
    return numba.njit(**opts)(fn)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
