"""Numba dispatch.

Kernels in :mod:`oculolipid.kernels` come in two flavours: an ``@njit``
version and a pure-numpy version.  The numba path is used when numba is
importable and ``OCULOLIPID_DISABLE_NUMBA`` is unset (or ``0``).
"""

import os

_flag = os.environ.get("OCULOLIPID_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    HAVE_NUMBA = False
    _njit = None

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a passthrough when numba is missing."""
    bare = len(args) == 1 and callable(args[0])
    if not HAVE_NUMBA:
        return args[0] if bare else (lambda f: f)
    kwargs.setdefault("cache", True)
    if bare:
        return _njit(**kwargs)(args[0])
    return _njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
