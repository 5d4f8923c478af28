"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting
``SBPRUNE_PURE_PYTHON=1`` forces the numpy fallback.  Both backends expose
the same functions (see ``_kernels_py`` for the reference semantics), so
selection only affects speed, not behavior.
"""

import os

from . import _kernels_py

if os.environ.get("SBPRUNE_PURE_PYTHON", "").strip() in ("", "0"):
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py
else:
    kernels = _kernels_py


def backend_name():
    """Either "cython" or "numpy"."""
    return kernels.BACKEND
