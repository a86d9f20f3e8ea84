"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback with the same signatures. ``MSDE_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("MSDE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

philox4x32 = _impl.philox4x32
standard_normals = _impl.standard_normals
first_exit = _impl.first_exit
window_sup_moment = _impl.window_sup_moment
iterated_sum = _impl.iterated_sum

__all__ = [
    "BACKEND",
    "philox4x32",
    "standard_normals",
    "first_exit",
    "window_sup_moment",
    "iterated_sum",
]
