# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled conv3d kernels. Same call signatures as ``_npkernels``."""
import numpy as np

cdef extern from "conv_kernels.h" nogil:
    int SS_VEC
    int SS_COB
    void conv_fwd_f32(const float *xp, Py_ssize_t xstride, const float *w, const float *bias,
                      Py_ssize_t cout, Py_ssize_t cin, Py_ssize_t nk, const Py_ssize_t *offs,
                      Py_ssize_t start, Py_ssize_t stop, float *out, Py_ssize_t ostride)
    void conv_fwd_f64(const double *xp, Py_ssize_t xstride, const double *w, const double *bias,
                      Py_ssize_t cout, Py_ssize_t cin, Py_ssize_t nk, const Py_ssize_t *offs,
                      Py_ssize_t start, Py_ssize_t stop, double *out, Py_ssize_t ostride)
    void conv_wgrad_f32(const float *dop, Py_ssize_t dstride, const float *xp, Py_ssize_t xstride,
                        Py_ssize_t cout, Py_ssize_t cin, Py_ssize_t nk, const Py_ssize_t *offs,
                        Py_ssize_t start, Py_ssize_t stop, float *dw)
    void conv_wgrad_f64(const double *dop, Py_ssize_t dstride, const double *xp, Py_ssize_t xstride,
                        Py_ssize_t cout, Py_ssize_t cin, Py_ssize_t nk, const Py_ssize_t *offs,
                        Py_ssize_t start, Py_ssize_t stop, double *dw)

_geometry_cache = {}


def _geometry(shape, int r):
    # flat tap offsets and the output range for a padded (X, Y, Z) grid
    key = (tuple(shape), r)
    hit = _geometry_cache.get(key)
    if hit is not None:
        return hit
    cdef Py_ssize_t px = shape[0] + 2 * r, py = shape[1] + 2 * r, pz = shape[2] + 2 * r
    cdef Py_ssize_t sy = pz, sx = py * pz
    offs = np.array(
        [a * sx + b * sy + c
         for a in range(-r, r + 1) for b in range(-r, r + 1) for c in range(-r, r + 1)],
        dtype=np.intp,
    )
    start = r * sx + r * sy + r
    hit = (offs, start, px * sx - start, (px, py, pz))
    _geometry_cache[key] = hit
    return hit


def _padded(x, int r, pshape, dtype):
    # zero-padded copy, flattened per channel, with SS_VEC elements of tail slack
    C, X, Y, Z = x.shape
    P = pshape[0] * pshape[1] * pshape[2]
    buf = np.zeros((C, P + SS_VEC), dtype=dtype)
    buf[:, :P].reshape((C,) + tuple(pshape))[:, r:r + X, r:r + Y, r:r + Z] = x
    return buf


def _run_fwd(xp, w, bias, offs, Py_ssize_t start, Py_ssize_t stop):
    # w: (cout, cin, nk); cout is padded to a tile multiple here and trimmed on return
    cdef Py_ssize_t cout = w.shape[0], cin = w.shape[1], nk = w.shape[2]
    cdef Py_ssize_t cpad = -cout % SS_COB
    cdef Py_ssize_t cp = cout + cpad
    cdef Py_ssize_t P = xp.shape[1]
    if cpad:
        w = np.concatenate([w, np.zeros((cpad, cin, nk), dtype=w.dtype)])
        if bias is not None:
            bias = np.concatenate([bias, np.zeros(cpad, dtype=bias.dtype)])
    out = np.empty((cp, P), dtype=xp.dtype)
    cdef float[:, ::1] xf, of
    cdef double[:, ::1] xd, od
    cdef float[:, ::1] wf
    cdef double[:, ::1] wd
    cdef float[::1] bf
    cdef double[::1] bd
    cdef Py_ssize_t[::1] ov = offs
    if xp.dtype == np.float32:
        xf = xp; of = out; wf = w.reshape(cp, cin * nk)
        if bias is None:
            with nogil:
                conv_fwd_f32(&xf[0, 0], P, &wf[0, 0], NULL, cp, cin, nk, &ov[0], start, stop, &of[0, 0], P)
        else:
            bf = bias
            with nogil:
                conv_fwd_f32(&xf[0, 0], P, &wf[0, 0], &bf[0], cp, cin, nk, &ov[0], start, stop, &of[0, 0], P)
    else:
        xd = xp; od = out; wd = w.reshape(cp, cin * nk)
        if bias is None:
            with nogil:
                conv_fwd_f64(&xd[0, 0], P, &wd[0, 0], NULL, cp, cin, nk, &ov[0], start, stop, &od[0, 0], P)
        else:
            bd = bias
            with nogil:
                conv_fwd_f64(&xd[0, 0], P, &wd[0, 0], &bd[0], cp, cin, nk, &ov[0], start, stop, &od[0, 0], P)
    return out[:cout]


def _interior(flat, pshape, int r, dims):
    C = flat.shape[0]
    P = pshape[0] * pshape[1] * pshape[2]
    X, Y, Z = dims
    grid = flat[:, :P].reshape((C,) + tuple(pshape))
    return np.ascontiguousarray(grid[:, r:r + X, r:r + Y, r:r + Z])


def conv3d_forward(x, w, b):
    """Same-padded stride-1 cross-correlation.

    x: (Cin, X, Y, Z); w: (Cout, Cin, k, k, k); b: (Cout,). Returns (Cout, X, Y, Z).
    """
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    r = k // 2
    dims = x.shape[1:]
    offs, start, stop, pshape = _geometry(dims, r)
    xp = _padded(x, r, pshape, x.dtype)
    wk = np.ascontiguousarray(w, dtype=x.dtype).reshape(cout, cin, k ** 3)
    out = _run_fwd(xp, wk, np.ascontiguousarray(b, dtype=x.dtype), offs, start, stop)
    return _interior(out, pshape, r, dims)


def conv3d_backward(dout, x, w, need_dx=True):
    """Gradients (dx, dw, db) of ``conv3d_forward`` given upstream ``dout``.

    With ``need_dx=False`` the input gradient is skipped and returned as None.
    """
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    r = k // 2
    dims = x.shape[1:]
    offs, start, stop, pshape = _geometry(dims, r)
    dt = x.dtype
    dout = np.asarray(dout, dtype=dt)
    dop = _padded(dout, r, pshape, dt)
    xp = _padded(x, r, pshape, dt)

    dx = None
    if need_dx:
        # correlation of dout with the flipped, channel-transposed kernel
        wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4), dtype=dt)
        dx = _interior(_run_fwd(dop, wflip.reshape(cin, cout, k ** 3), None, offs, start, stop),
                       pshape, r, dims)

    dw = np.zeros((cout, cin * k ** 3), dtype=dt)
    cdef Py_ssize_t P = xp.shape[1], nk = k ** 3
    cdef Py_ssize_t[::1] ov = offs
    cdef float[:, ::1] df, xf, wf
    cdef double[:, ::1] dd, xd, wd
    cdef Py_ssize_t s0 = start, s1 = stop, co = cout, ci = cin
    if dt == np.float32:
        df = dop; xf = xp; wf = dw
        with nogil:
            conv_wgrad_f32(&df[0, 0], P, &xf[0, 0], P, co, ci, nk, &ov[0], s0, s1, &wf[0, 0])
    else:
        dd = dop; xd = xp; wd = dw
        with nogil:
            conv_wgrad_f64(&dd[0, 0], P, &xd[0, 0], P, co, ci, nk, &ov[0], s0, s1, &wd[0, 0])
    db = dout.sum(axis=(1, 2, 3))
    return dx, dw.reshape(w.shape), db
