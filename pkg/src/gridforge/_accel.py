"""Backend selection for the hot kernels.

The convolution and pooling kernels exist twice: a numba ``@njit`` loop
version and a vectorised pure-numpy version.  ``GRIDFORGE_BACKEND`` picks
one at import time (``numba`` or ``numpy``); numba is the default when it
imports cleanly.  ``GRIDFORGE_THREADS`` caps numba's thread pool.
"""

import os
import warnings

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("GRIDFORGE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"GRIDFORGE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba" and numba is None:  # pragma: no cover
    warnings.warn("numba not importable, falling back to the numpy backend")
    _requested = "numpy"

BACKEND = _requested
HAVE_NUMBA = numba is not None


def njit(f=None, **options):
    """``numba.njit`` when numba is importable, identity otherwise.

    Kernels are always compiled when numba exists so the benchmark and the
    cross-backend tests can reach both paths regardless of ``BACKEND``.
    """
    if numba is None:
        return f if f is not None else (lambda g: g)
    options.setdefault("cache", True)
    if f is None:
        return lambda g: numba.njit(g, **options)
    return numba.njit(f, **options)


def configure_threads(n=None):
    """Cap numba's worker threads at ``n`` (or ``GRIDFORGE_THREADS``)."""
    if n is None:
        raw = os.environ.get("GRIDFORGE_THREADS")
        if not raw:
            return
        n = int(raw)
    if n < 1:
        raise ValueError("thread cap must be >= 1")
    if numba is not None:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
