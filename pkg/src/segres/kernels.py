"""Backend selection for the per-pixel kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``SEGRES_PURE_PYTHON=1`` to force the fallback.
"""
import os

from segres import _kernels_py

try:
    if os.environ.get("SEGRES_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from segres import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

project_simplex = _impl.project_simplex
shrink = _impl.shrink
unary = _impl.unary


def backends():
    """Map of backend name to module, for every backend that imports."""
    found = {"python": _kernels_py}
    try:
        from segres import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
