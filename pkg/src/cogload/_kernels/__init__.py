"""Backend selection for the hot kernels.

Default is the numba backend; set COGLOAD_NO_NUMBA=1 (or leave numba
uninstalled) to run on the pure-numpy fallback.  Both backends produce
bit-identical output, which tests/test_kernels.py enforces.
"""

from __future__ import annotations

import os

from .rng import sm64, sm64_array

__all__ = ["BACKEND", "build_tree", "tree_apply", "knn_mean_dist",
           "sm64", "sm64_array"]

_disabled = os.environ.get("COGLOAD_NO_NUMBA", "") not in ("", "0")
if _disabled:
    from . import backend_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import backend_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import backend_numpy as _impl

        BACKEND = "numpy"

build_tree = _impl.build_tree
tree_apply = _impl.tree_apply
knn_mean_dist = _impl.knn_mean_dist
