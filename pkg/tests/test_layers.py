import itertools
import math

import numpy as np
import pytest

from smallseg.nn.layers import (
    CE_EPS,
    ShapeError,
    concat_forward,
    cross_entropy,
    dropout_forward,
    maxpool3d_backward,
    maxpool3d_forward,
    softmax,
    upsample3d_backward,
    upsample3d_forward,
)


def test_maxpool_single_window():
    x = np.arange(1, 9, dtype=float).reshape(1, 2, 2, 2)
    out, arg = maxpool3d_forward(x)
    assert out.shape == (1, 1, 1, 1) and out.item() == 8.0 and arg.item() == 7


def test_maxpool_matches_enumeration():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4, 6, 2))
    out, _ = maxpool3d_forward(x)
    for c, i, j, k in itertools.product(range(3), range(2), range(3), range(1)):
        window = x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2, 2 * k:2 * k + 2]
        assert out[c, i, j, k] == window.max()


def test_maxpool_backward_routes_to_argmax():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 4, 4, 4))
    out, arg = maxpool3d_forward(x)
    d = rng.standard_normal(out.shape)
    dx = maxpool3d_backward(d, arg, x.shape)
    assert np.count_nonzero(dx) == d.size
    up = out.repeat(2, 1).repeat(2, 2).repeat(2, 3)
    np.testing.assert_array_equal(dx != 0, x == up)
    assert dx.sum() == pytest.approx(d.sum())


def test_maxpool_odd_dims_rejected():
    with pytest.raises(ShapeError):
        maxpool3d_forward(np.zeros((1, 3, 2, 2)))


@pytest.mark.parametrize("mode", ["nearest", "trilinear"])
def test_upsample_backward_is_adjoint(mode):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 2, 4))
    g = rng.standard_normal((2, 6, 4, 8))
    lhs = np.sum(upsample3d_forward(x, mode) * g)
    rhs = np.sum(x * upsample3d_backward(g, mode))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_trilinear_preserves_constants_and_ramps():
    x = np.full((1, 3, 3, 3), 2.5)
    np.testing.assert_allclose(upsample3d_forward(x, "trilinear"), 2.5)
    ramp = np.arange(4, dtype=float).reshape(1, 4, 1, 1) * np.ones((1, 4, 2, 2))
    up = upsample3d_forward(ramp, "trilinear")[0, :, 0, 0]
    # interior samples sit a quarter voxel either side of each source centre
    np.testing.assert_allclose(up[1:-1], np.arange(1, 7) * 0.5 - 0.25)


def test_dropout_modes():
    rng = np.random.default_rng(3)
    x = np.ones((4, 8, 8, 8))
    out, mask = dropout_forward(x, 0.5, "infer", rng)
    assert out is x and mask is None
    out, mask = dropout_forward(x, 0.5, "train", rng)
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.1
    with pytest.raises(ValueError):
        dropout_forward(x, 0.5, "eval", rng)


def test_concat_shape_mismatch():
    with pytest.raises(ShapeError):
        concat_forward(np.zeros((1, 2, 2, 2)), np.zeros((1, 2, 2, 4)))
    assert concat_forward(np.zeros((1, 2, 2, 2)), np.ones((3, 2, 2, 2))).shape == (4, 2, 2, 2)


def test_softmax_uniform_and_stability():
    p = softmax(np.zeros((20, 2, 2, 2)))
    np.testing.assert_allclose(p, 1 / 20, rtol=0, atol=1e-15)
    p = softmax(np.array([1000.0, 0.0, -1000.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


def test_softmax_shift_invariant():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((5, 3, 3, 3))
    np.testing.assert_allclose(softmax(z), softmax(z + 123.0), rtol=1e-12)


def test_cross_entropy_values():
    uniform = np.full((20, 1), 1 / 20)
    onehot = np.zeros((20, 1))
    onehot[7] = 1.0
    assert abs(cross_entropy(uniform, onehot)[0] - math.log(20)) < 1e-12
    assert cross_entropy(onehot, onehot)[0] == 0.0
    # log(0) is clamped
    assert cross_entropy(np.zeros((2, 1)), np.array([[1.0], [0.0]]))[0] == pytest.approx(-math.log(CE_EPS))
