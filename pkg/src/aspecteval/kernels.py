"""Numeric kernel dispatch.

Uses the compiled ``_kernels`` extension when it was built, otherwise the
pure-Python twin. Set ``ASPECTEVAL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

IMPLEMENTATION = "python"
_impl = _kernels_py

if os.environ.get("ASPECTEVAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        IMPLEMENTATION = "cython"

cosine = _impl.cosine
pearson = _impl.pearson
average_ranks = _impl.average_ranks
pair_counts = _impl.pair_counts

__all__ = ["IMPLEMENTATION", "cosine", "pearson", "average_ranks", "pair_counts"]
