"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports cleanly; setting
``MINIMAX_SPP_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the
active choice.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MINIMAX_SPP_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

max_flow_dense = _impl.max_flow_dense
capped_simplex_projection = _impl.capped_simplex_projection
diag_structured_pcg = _impl.diag_structured_pcg
ordered_row_mean = _impl.ordered_row_mean

__all__ = [
    "BACKEND",
    "max_flow_dense",
    "capped_simplex_projection",
    "diag_structured_pcg",
    "ordered_row_mean",
]
