"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``SOJOURN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("SOJOURN_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

ml_taylor = _impl.ml_taylor
sojourn_sums = _impl.sojourn_sums

__all__ = ["BACKEND", "ml_taylor", "sojourn_sums"]
