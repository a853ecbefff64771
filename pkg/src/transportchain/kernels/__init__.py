"""Marching kernels with a compiled fast path and a numpy fallback.

The compiled extension is optional; set TRANSPORTCHAIN_NO_SPEEDUPS=1 to
force the numpy reference implementation (used by the benchmark and the
backend-consistency tests).
"""
import os

from . import _reference

if os.environ.get("TRANSPORTCHAIN_NO_SPEEDUPS"):
    _impl = _reference
    BACKEND = "numpy"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _reference
        BACKEND = "numpy"

closed_loop_march = _impl.closed_loop_march
upwind_march = _impl.upwind_march


def get_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return BACKEND


__all__ = ["BACKEND", "closed_loop_march", "get_backend", "upwind_march"]
