"""Hot-kernel backend selection.

The compiled extension is used when importable; ``SPADAAC_PURE_PYTHON=1``
forces the NumPy fallback.  ``BACKEND`` names the active implementation.
"""
import os

from . import _kernels_py

if os.environ.get("SPADAAC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

rate_and_derivatives = _impl.rate_and_derivatives
arrival_counts = _impl.arrival_counts
trigger_solve = _impl.trigger_solve


def backends():
    """Mapping of every importable backend name to its module."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found
