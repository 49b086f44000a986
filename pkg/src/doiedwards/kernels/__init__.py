"""Kernel dispatch: numba-compiled loops with a pure-numpy fallback.

The numba path is used when numba imports cleanly; set the environment
variable DOIEDWARDS_DISABLE_NUMBA=1 to force the numpy path (useful for
debugging and for the backend benchmark).  The two backends agree to
rounding error (summation order differs slightly); tests pin this down.
"""

import os

from . import _numpy_impl

_DISABLED = os.environ.get("DOIEDWARDS_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

if not _DISABLED:
    try:
        from . import _numba_impl
    except ImportError:
        _numba_impl = None
else:
    _numba_impl = None

_impl = _numba_impl if _numba_impl is not None else _numpy_impl


def active_backend():
    """Name of the backend in use, 'numba' or 'numpy'."""
    return "numba" if _impl is _numba_impl and _numba_impl is not None else "numpy"


def legendre_tables(x, degree):
    return _impl.legendre_tables(x, degree)


def trig_weight_matrix(c0, c, n_in, n_out):
    return _impl.trig_weight_matrix(c0, c, n_in, n_out)
