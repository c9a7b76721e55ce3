"""Backend selection for the conv3d hot loop.

The compiled extension is preferred; set ``SMALLSEG_BACKEND=numpy`` to force
the pure-numpy path (or if the extension was never built).
"""
import os

from . import _npkernels

BACKEND = "numpy"
_impl = _npkernels

if os.environ.get("SMALLSEG_BACKEND", "").lower() != "numpy":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _npkernels


def conv3d_forward(x, w, b):
    return _impl.conv3d_forward(x, w, b)


def conv3d_backward(dout, x, w, need_dx=True):
    return _impl.conv3d_backward(dout, x, w, need_dx)
