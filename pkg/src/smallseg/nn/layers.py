"""Layer kinds of the encoder-decoder, each with an explicit backward pass.

Tensors are ``(C, X, Y, Z)`` arrays. Every layer keeps what its backward pass
needs from the most recent cached forward call.
"""
from __future__ import annotations

import numpy as np

from . import kernels

CE_EPS = 1e-12


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"
    params: dict

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def out_channels(self, in_channels):
        return in_channels


class Conv3d(Layer):
    """Same-padded 3-D convolution, optionally followed by ReLU."""

    kind = "conv"

    def __init__(self, name, cin, cout, kernel=3, relu=True, dtype=np.float64):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        self.cin, self.cout, self.kernel, self.relu = cin, cout, kernel, relu
        self.input_grad = True  # cleared when fed directly by the network input
        self.params = {
            "weight": np.zeros((cout, cin, kernel, kernel, kernel), dtype=dtype),
            "bias": np.zeros(cout, dtype=dtype),
        }
        self.zero_grad()

    def init_he(self, rng):
        fan_in = self.cin * self.kernel ** 3
        w = rng.standard_normal(self.params["weight"].shape) * np.sqrt(2.0 / fan_in)
        self.params["weight"][...] = w
        self.params["bias"][...] = 0.0

    def out_channels(self, in_channels):
        if in_channels != self.cin:
            raise ShapeError(f"layer {self.name}: expected {self.cin} input channels, got {in_channels}")
        return self.cout

    def forward(self, x, cache=True, train=False):
        if x.shape[0] != self.cin:
            raise ShapeError(f"layer {self.name}: expected {self.cin} input channels, got {x.shape[0]}")
        z = kernels.conv3d_forward(x, self.params["weight"], self.params["bias"])
        out = np.maximum(z, 0) if self.relu else z
        if cache:
            self._x, self._out = x, out
        return out

    def backward(self, dout):
        if self.relu:
            dout = dout * (self._out > 0)
        dx, dw, db = kernels.conv3d_backward(dout, self._x, self.params["weight"], self.input_grad)
        self.grads["weight"] += dw
        self.grads["bias"] += db
        return dx


class MaxPool(Layer):
    """Non-overlapping 2x2x2 max pooling."""

    kind = "maxpool"

    def forward(self, x, cache=True, train=False):
        out, arg = maxpool3d_forward(x)
        if cache:
            self._arg, self._shape = arg, x.shape
        return out

    def backward(self, dout):
        return maxpool3d_backward(dout, self._arg, self._shape)


class Upsample(Layer):
    """2x upsampling per axis (nearest or trilinear)."""

    kind = "upsample"

    def __init__(self, name, mode="nearest"):
        super().__init__(name)
        if mode not in ("nearest", "trilinear"):
            raise ValueError(f"unknown upsampling mode {mode!r}")
        self.mode = mode

    def forward(self, x, cache=True, train=False):
        return upsample3d_forward(x, self.mode)

    def backward(self, dout):
        return upsample3d_backward(dout, self.mode)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, name, p):
        super().__init__(name)
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = np.random.default_rng(0)

    def forward(self, x, cache=True, train=False):
        out, mask = dropout_forward(x, self.p, "train" if train else "infer", self.rng)
        if cache:
            self._mask = mask
        return out

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Concat(Layer):
    kind = "concat"

    def forward(self, a, b, cache=True, train=False):
        out = concat_forward(a, b, self.name)
        if cache:
            self._split = a.shape[0]
        return out

    def backward(self, dout):
        return dout[: self._split], dout[self._split:]


# functional forms --------------------------------------------------------


def maxpool3d_forward(x):
    """Returns (pooled, argmax) with argmax in 0..7 over each 2x2x2 window."""
    c, X, Y, Z = x.shape
    if X % 2 or Y % 2 or Z % 2:
        raise ShapeError(f"maxpool needs even spatial dims, got {(X, Y, Z)}")
    win = x.reshape(c, X // 2, 2, Y // 2, 2, Z // 2, 2).transpose(0, 1, 3, 5, 2, 4, 6)
    win = win.reshape(c, X // 2, Y // 2, Z // 2, 8)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool3d_backward(dout, arg, shape):
    c, X, Y, Z = shape
    win = np.zeros(dout.shape + (8,), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(c, X // 2, Y // 2, Z // 2, 2, 2, 2).transpose(0, 1, 4, 2, 5, 3, 6)
    return win.reshape(shape)


def _lin_up(x, axis):
    # half-voxel aligned linear 2x upsampling with edge clamping
    n = x.shape[axis]
    prev = np.take(x, np.maximum(np.arange(n) - 1, 0), axis=axis)
    nxt = np.take(x, np.minimum(np.arange(n) + 1, n - 1), axis=axis)
    even = 0.75 * x + 0.25 * prev
    odd = 0.75 * x + 0.25 * nxt
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(x.shape)
    shape[axis] = 2 * n
    return out.reshape(shape)


def _lin_up_adjoint(g, axis):
    n = g.shape[axis] // 2
    shape = list(g.shape)
    shape[axis:axis + 1] = [n, 2]
    g = g.reshape(shape)
    even = np.take(g, 0, axis=axis + 1)
    odd = np.take(g, 1, axis=axis + 1)
    dx = 0.75 * (even + odd)
    idx_prev = np.maximum(np.arange(n) - 1, 0)
    idx_next = np.minimum(np.arange(n) + 1, n - 1)
    # scatter-add the 0.25 neighbour contributions back to their sources
    moved = np.moveaxis(dx, axis, 0)
    np.add.at(moved, idx_prev, 0.25 * np.moveaxis(even, axis, 0))
    np.add.at(moved, idx_next, 0.25 * np.moveaxis(odd, axis, 0))
    return dx


def upsample3d_forward(x, mode="nearest"):
    if mode == "nearest":
        return x.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)
    out = x
    for axis in (1, 2, 3):
        out = _lin_up(out, axis)
    return out


def upsample3d_backward(dout, mode="nearest"):
    c, X, Y, Z = dout.shape
    if mode == "nearest":
        return dout.reshape(c, X // 2, 2, Y // 2, 2, Z // 2, 2).sum(axis=(2, 4, 6))
    g = dout
    for axis in (3, 2, 1):
        g = _lin_up_adjoint(g, axis)
    return g


def dropout_forward(x, p, mode, rng):
    """Inverted dropout. Returns (out, mask); mask is None when the layer is an identity."""
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "infer" or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def concat_forward(a, b, name="concat"):
    if a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"layer {name}: spatial dims differ {a.shape[1:]} vs {b.shape[1:]}")
    return np.concatenate([a, b], axis=0)


def softmax(z, axis=0):
    """Max-shifted softmax over ``axis`` (class axis)."""
    z = np.asarray(z, dtype=np.float64) if not np.issubdtype(np.asarray(z).dtype, np.floating) else np.asarray(z)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(f, t, axis=0, eps=CE_EPS):
    """-sum_i t_i log(max(f_i, eps)) along ``axis``; per-voxel values."""
    return -(np.asarray(t) * np.log(np.maximum(f, eps))).sum(axis=axis)
