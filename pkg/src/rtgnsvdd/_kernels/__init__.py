"""Kernel backend selection.

The compiled extension (``_fast``) is preferred when it imported cleanly;
the numpy implementation (``pure``) is the fallback.  Selection happens once
at import and can be forced with the RTGNSVDD_BACKEND environment variable
(``auto`` | ``fast`` | ``pure``).
"""

import os

from . import pure

_requested = os.environ.get("RTGNSVDD_BACKEND", "auto").lower()

if _requested == "pure":
    _impl = pure
elif _requested in ("auto", "fast"):
    try:
        from . import _fast as _impl
    except ImportError:
        if _requested == "fast":
            raise
        _impl = pure
else:
    raise ValueError(f"RTGNSVDD_BACKEND must be auto, fast or pure, got {_requested!r}")

BACKEND_NAME = _impl.BACKEND_NAME

affine_fwd = _impl.affine_fwd
affine_bwd = _impl.affine_bwd
tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
softplus_fwd = _impl.softplus_fwd
softplus_bwd = _impl.softplus_bwd
gru_fwd = _impl.gru_fwd
gru_bwd = _impl.gru_bwd
time_encode_fwd = _impl.time_encode_fwd
time_encode_bwd = _impl.time_encode_bwd


def backend_name() -> str:
    """Name of the kernel backend selected at import ("fast" or "pure")."""
    return BACKEND_NAME
