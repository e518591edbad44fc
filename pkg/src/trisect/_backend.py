"""Kernel backend selection.

Imports the compiled extension when it was built, otherwise the pure-Python
fallback. Set ``TRISECT_PURE_PYTHON=1`` to force the fallback (used by the
backend-equivalence tests and the benchmark).
"""

import os

if os.environ.get("TRISECT_PURE_PYTHON"):
    from trisect import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from trisect import _ckernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from trisect import _pykernels as kernels  # type: ignore[no-redef]

        BACKEND = "python"
