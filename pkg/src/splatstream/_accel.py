"""Kernel acceleration switch.

Hot rasterizer loops are compiled with numba when available. Setting the
environment variable ``SPLATSTREAM_BACKEND=numpy`` before import forces the
pure-numpy interpreted path (same source, no JIT), which is what the
``benchmarks/`` scripts compare against. The flag is read once at import.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

BACKEND = os.environ.get("SPLATSTREAM_BACKEND", "").strip().lower()
if BACKEND not in ("", "numba", "numpy"):
    raise ValueError(f"SPLATSTREAM_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if not BACKEND:
    BACKEND = "numba" if numba is not None else "numpy"
if BACKEND == "numba" and numba is None:
    BACKEND = "numpy"

USE_NUMBA = BACKEND == "numba"


def kernel(fn):
    """JIT-compile ``fn`` under the numba backend, return it unchanged otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
