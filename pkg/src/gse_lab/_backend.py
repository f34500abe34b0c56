"""Pick the compiled kernels when available, the numpy twin otherwise.

Set ``GSE_LAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("GSE_LAB_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

batch_gse = kernels.batch_gse
det_stack = kernels.det_stack
principal_minors = kernels.principal_minors
