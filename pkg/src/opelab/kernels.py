"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting
``OPELAB_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("OPELAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

hafnian_batch = _impl.hafnian_batch
nn_map_batch = _impl.nn_map_batch

__all__ = ["BACKEND", "hafnian_batch", "nn_map_batch"]
