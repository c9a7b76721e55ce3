"""Pure-numpy conv3d kernels, used when the compiled extension is unavailable."""
import numpy as np


def _taps(k):
    return [(a, b, c) for a in range(k) for b in range(k) for c in range(k)]


def conv3d_forward(x, w, b):
    """Same-padded stride-1 cross-correlation.

    x: (Cin, X, Y, Z); w: (Cout, Cin, k, k, k); b: (Cout,). Returns (Cout, X, Y, Z).
    """
    k = w.shape[2]
    r = k // 2
    X, Y, Z = x.shape[1:]
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (r, r))) if r else x
    out = np.empty((w.shape[0], X, Y, Z), dtype=x.dtype)
    out[...] = np.asarray(b, dtype=x.dtype)[:, None, None, None]
    for a, bb, c in _taps(k):
        out += np.tensordot(w[:, :, a, bb, c], xp[:, a:a + X, bb:bb + Y, c:c + Z], axes=(1, 0))
    return out


def conv3d_backward(dout, x, w, need_dx=True):
    """Gradients (dx, dw, db) of ``conv3d_forward`` given upstream ``dout``.

    With ``need_dx=False`` the input gradient is skipped and returned as None.
    """
    k = w.shape[2]
    r = k // 2
    X, Y, Z = x.shape[1:]
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (r, r))) if r else x
    dxp = np.zeros_like(xp) if need_dx else None
    dw = np.empty_like(w, dtype=x.dtype)
    for a, bb, c in _taps(k):
        window = xp[:, a:a + X, bb:bb + Y, c:c + Z]
        dw[:, :, a, bb, c] = np.tensordot(dout, window, axes=([1, 2, 3], [1, 2, 3]))
        if need_dx:
            dxp[:, a:a + X, bb:bb + Y, c:c + Z] += np.tensordot(w[:, :, a, bb, c], dout, axes=(0, 0))
    if not need_dx:
        return None, dw, dout.sum(axis=(1, 2, 3))
    dx = dxp[:, r:r + X, r:r + Y, r:r + Z] if r else dxp
    return np.ascontiguousarray(dx), dw, dout.sum(axis=(1, 2, 3))
