import numpy as np
import pytest

from smallseg.nn import _npkernels, kernels

BACKENDS = [_npkernels]
try:
    from smallseg.nn import _ckernels

    BACKENDS.append(_ckernels)
except ImportError:  # extension not built
    pass


def naive_conv(x, w, b):
    """Direct six-loop same-padded cross-correlation."""
    cin, X, Y, Z = x.shape
    cout, _, k, _, _ = w.shape
    r = k // 2
    out = np.zeros((cout, X, Y, Z))
    for co in range(cout):
        for i in range(X):
            for j in range(Y):
                for l in range(Z):
                    acc = b[co]
                    for a in range(k):
                        for bb in range(k):
                            for c in range(k):
                                ii, jj, ll = i + a - r, j + bb - r, l + c - r
                                if 0 <= ii < X and 0 <= jj < Y and 0 <= ll < Z:
                                    acc += w[co, :, a, bb, c] @ x[:, ii, jj, ll]
                    out[co, i, j, l] = acc
    return out


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


@pytest.mark.parametrize("shape,cout,k", [((2, 4, 5, 3), 3, 3), ((1, 3, 3, 3), 5, 3), ((3, 2, 4, 2), 2, 1)])
def test_forward_matches_naive(backend, shape, cout, k):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((cout, shape[0], k, k, k))
    b = rng.standard_normal(cout)
    np.testing.assert_allclose(backend.conv3d_forward(x, w, b), naive_conv(x, w, b), rtol=1e-12, atol=1e-12)


def test_backward_is_adjoint_of_forward(backend):
    # <conv(x), d> is bilinear, so its gradients are exact directional derivatives
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 5, 4, 6))
    w = rng.standard_normal((4, 3, 3, 3, 3))
    b = rng.standard_normal(4)
    d = rng.standard_normal((4, 5, 4, 6))
    dx, dw, db = backend.conv3d_backward(d, x, w)
    zero = np.zeros(4)
    for i in range(5):
        e = np.zeros_like(x)
        e.flat[rng.integers(x.size)] = 1.0
        assert np.sum(backend.conv3d_forward(e, w, zero) * d) == pytest.approx(np.sum(dx * e), rel=1e-12)
        e = np.zeros_like(w)
        e.flat[rng.integers(w.size)] = 1.0
        assert np.sum(backend.conv3d_forward(x, e, zero) * d) == pytest.approx(np.sum(dw * e), rel=1e-12)
    np.testing.assert_allclose(db, d.sum(axis=(1, 2, 3)))


def test_skip_input_gradient(backend):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 4, 4, 4))
    w = rng.standard_normal((2, 1, 3, 3, 3))
    d = rng.standard_normal((2, 4, 4, 4))
    dx, dw, db = backend.conv3d_backward(d, x, w, need_dx=False)
    assert dx is None
    np.testing.assert_allclose(dw, backend.conv3d_backward(d, x, w)[1])


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 2e-5)])
def test_backends_agree(dtype, tol):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 10, 12, 9)).astype(dtype)
    w = rng.standard_normal((6, 5, 3, 3, 3)).astype(dtype)
    b = rng.standard_normal(6).astype(dtype)
    d = rng.standard_normal((6, 10, 12, 9)).astype(dtype)
    ref = [_npkernels.conv3d_forward(x, w, b), *_npkernels.conv3d_backward(d, x, w)]
    got = [_ckernels.conv3d_forward(x, w, b), *_ckernels.conv3d_backward(d, x, w)]
    for r, g in zip(ref, got):
        assert g.dtype == dtype
        np.testing.assert_allclose(g, r, rtol=tol, atol=tol * np.abs(r).max())


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "numpy")
