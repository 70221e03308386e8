"""Kernel dispatch: compiled core when importable, numpy fallback otherwise.

Set ``SCFRED_PURE=1`` to force the fallback (used by the benchmark and by
the parity tests).
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"

if not os.environ.get("SCFRED_PURE"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels
else:
    _impl = _pykernels

cutoff = _impl.cutoff
glue_pointwise = _impl.glue_pointwise
unglue_pointwise = _impl.unglue_pointwise
gf2_row_reduce = _impl.gf2_row_reduce

__all__ = [
    "BACKEND",
    "cutoff",
    "glue_pointwise",
    "unglue_pointwise",
    "gf2_row_reduce",
]
