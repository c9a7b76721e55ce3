"""U-shaped 3-D encoder-decoder: building, forward/backward, SGD step.

With ``depth`` pooling levels the builder emits 4*depth + 3 conv layers,
depth pooling, upsampling and merge layers and one dropout layer, i.e.
7*depth + 4 layers (25 at the default depth of 3).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    CE_EPS,
    Concat,
    Conv3d,
    Dropout,
    MaxPool,
    ShapeError,
    Upsample,
    softmax,
)


@dataclass
class NetworkConfig:
    in_channels: int = 1
    num_classes: int = 21
    depth: int = 3
    base_channels: int = 8
    kernel: int = 3
    dropout: float = 0.5
    upsample: str = "nearest"
    dtype: str = "float64"
    seed: int = 0
    input_offset: float = 0.0  # subtracted from the input before the first conv

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel must be a positive odd integer")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if not math.isfinite(self.input_offset):
            raise ValueError("input_offset must be finite")

    def channels(self, level):
        return self.base_channels * 2 ** level

    def to_dict(self):
        return asdict(self)


def analytic_parameter_count(cfg: NetworkConfig) -> int:
    """Closed-form parameter count for the U-net built from ``cfg``."""
    k3 = cfg.kernel ** 3
    c = [cfg.channels(level) for level in range(cfg.depth + 1)]
    total = 0
    prev = cfg.in_channels
    for level in range(cfg.depth + 1):  # encoder levels and bottleneck
        total += k3 * (prev * c[level] + c[level] * c[level]) + 2 * c[level]
        prev = c[level]
    for level in range(cfg.depth):
        total += k3 * ((c[level + 1] + c[level]) * c[level] + c[level] ** 2) + 2 * c[level]
    return total + c[0] * cfg.num_classes + cfg.num_classes


class Network:
    """Layer list plus wiring. ``inputs[i]`` names the sources of layer i (-1 = network input)."""

    def __init__(self, config: NetworkConfig, layers, inputs, arch="unet"):
        self.config = config
        self.layers = list(layers)
        self.inputs = [tuple(src) for src in inputs]
        self.arch = arch
        self.dtype = np.dtype(config.dtype)
        self._check_wiring()
        for layer, src in zip(self.layers, self.inputs):
            if isinstance(layer, Conv3d):
                layer.input_grad = any(x >= 0 for x in src)

    # structure -----------------------------------------------------------

    def _check_wiring(self):
        channels = {-1: self.config.in_channels}
        level = {-1: 0}
        for i, (layer, src) in enumerate(zip(self.layers, self.inputs)):
            if any(s >= i for s in src):
                raise ShapeError(f"layer {layer.name} reads from a later layer")
            if isinstance(layer, Concat):
                a, b = src
                if level[a] != level[b]:
                    raise ShapeError(f"layer {layer.name} merges levels {level[a]} and {level[b]}")
                channels[i] = channels[a] + channels[b]
                level[i] = level[a]
                continue
            (s,) = src
            channels[i] = layer.out_channels(channels[s])
            level[i] = level[s] + (1 if isinstance(layer, MaxPool) else -1 if isinstance(layer, Upsample) else 0)
        if channels[len(self.layers) - 1] != self.config.num_classes:
            raise ShapeError("final layer does not emit num_classes channels")
        self.levels = max(level.values())

    @property
    def multiple(self):
        return 2 ** self.levels

    def layer_count(self):
        return len(self.layers)

    def parameters(self):
        """Registry: stable name -> parameter array (live views, updated in place)."""
        reg = {}
        for layer in self.layers:
            for pname, arr in layer.params.items():
                reg[f"{layer.name}.{pname}"] = arr
        return reg

    def gradients(self):
        return {f"{l.name}.{p}": g for l in self.layers for p, g in l.grads.items()}

    def parameter_count(self):
        return int(sum(a.size for a in self.parameters().values()))

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def set_seed(self, seed):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng([seed, 0x0D50])

    # execution -----------------------------------------------------------

    def _pad(self, x):
        m = self.multiple
        pads = [(0, 0)] + [(0, (-n) % m) for n in x.shape[1:]]
        if all(p == (0, 0) for p in pads):
            return x
        return np.pad(x, pads)

    def scores(self, x, mode="infer", cache=False):
        """Raw class scores (C, X, Y, Z) for input (Cin, X, Y, Z)."""
        if mode not in ("train", "infer"):
            raise ValueError(f"unknown mode {mode!r}")
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[0] != self.config.in_channels:
            raise ShapeError(f"input must be ({self.config.in_channels}, X, Y, Z), got {x.shape}")
        if self.config.input_offset:
            x = x - self.dtype.type(self.config.input_offset)
        spatial = x.shape[1:]
        outs = {-1: self._pad(x)}
        train = mode == "train"
        for i, (layer, src) in enumerate(zip(self.layers, self.inputs)):
            outs[i] = layer.forward(*(outs[s] for s in src), cache=cache, train=train)
        z = outs[len(self.layers) - 1]
        return z[:, : spatial[0], : spatial[1], : spatial[2]]

    def forward(self, x, mode="infer", cache=None):
        """Per-voxel class probabilities (softmax over the class axis)."""
        if cache is None:
            cache = mode == "train"
        return softmax(self.scores(x, mode, cache))

    def loss_and_backward(self, x, target, mode="train"):
        """Mean per-voxel cross-entropy; gradients are left in each layer's ``grads``."""
        target = np.asarray(target)
        probs = self.forward(x, mode=mode, cache=True)
        if target.shape != probs.shape[1:]:
            raise ShapeError(f"target dims {target.shape} do not match input dims {probs.shape[1:]}")
        C = probs.shape[0]
        if target.size and (target.min() < 0 or target.max() >= C):
            raise ValueError(f"target classes must lie in 0..{C - 1}")
        n = target.size
        t = target.astype(np.intp)[None]
        p_true = np.take_along_axis(probs, t, axis=0)[0]
        loss = float(-np.log(np.maximum(p_true, CE_EPS)).mean())
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        # d(mean CE)/dz = (softmax - onehot) / n, except where the log clamp is active
        dz = probs.copy()
        np.put_along_axis(dz, t, np.take_along_axis(dz, t, axis=0) - 1.0, axis=0)
        clamped = p_true < CE_EPS
        if clamped.any():
            dz[:, clamped] = 0.0
        dz /= n
        self._backward(dz.astype(self.dtype, copy=False))
        return loss

    def _backward(self, dz):
        self.zero_grad()
        grads = {}
        last = len(self.layers) - 1
        full = np.zeros((dz.shape[0],) + self._padded_shape, dtype=self.dtype)
        full[:, : dz.shape[1], : dz.shape[2], : dz.shape[3]] = dz
        grads[last] = full
        for i in range(last, -1, -1):
            g = grads.pop(i, None)
            if g is None:
                continue
            layer = self.layers[i]
            dins = layer.backward(g)
            if not isinstance(dins, tuple):
                dins = (dins,)
            for s, d in zip(self.inputs[i], dins):
                if s < 0:
                    continue
                grads[s] = d if s not in grads else grads[s] + d
            for pname, gr in layer.grads.items():
                if not np.all(np.isfinite(gr)):
                    raise FloatingPointError(f"non-finite gradient in layer {layer.name}.{pname}")

    @property
    def _padded_shape(self):
        conv = self.layers[0]
        return conv._x.shape[1:]

    def sgd_step(self, lr):
        for layer in self.layers:
            for pname, arr in layer.params.items():
                arr -= lr * layer.grads[pname]


def build_unet(cfg: NetworkConfig) -> Network:
    """Encoder-decoder with skip merges; He-initialised from ``cfg.seed``."""
    dt = np.dtype(cfg.dtype)
    k = cfg.kernel
    layers, inputs = [], []

    def add(layer, *src):
        layers.append(layer)
        inputs.append(src)
        return len(layers) - 1

    prev, cprev = -1, cfg.in_channels
    skips = []
    for level in range(cfg.depth):
        c = cfg.channels(level)
        prev = add(Conv3d(f"enc{level}.conv1", cprev, c, k, dtype=dt), prev)
        prev = add(Conv3d(f"enc{level}.conv2", c, c, k, dtype=dt), prev)
        skips.append((prev, c))
        prev = add(MaxPool(f"enc{level}.pool"), prev)
        cprev = c
    c = cfg.channels(cfg.depth)
    prev = add(Conv3d("bottleneck.conv1", cprev, c, k, dtype=dt), prev)
    prev = add(Conv3d("bottleneck.conv2", c, c, k, dtype=dt), prev)
    prev = add(Dropout("bottleneck.dropout", cfg.dropout), prev)
    cprev = c
    for level in range(cfg.depth - 1, -1, -1):
        skip, cskip = skips[level]
        prev = add(Upsample(f"dec{level}.up", cfg.upsample), prev)
        prev = add(Concat(f"dec{level}.merge"), prev, skip)
        prev = add(Conv3d(f"dec{level}.conv1", cprev + cskip, cskip, k, dtype=dt), prev)
        prev = add(Conv3d(f"dec{level}.conv2", cskip, cskip, k, dtype=dt), prev)
        cprev = cskip
    add(Conv3d("head", cprev, cfg.num_classes, 1, relu=False, dtype=dt), prev)

    net = Network(cfg, layers, inputs)
    init_weights(net, cfg.seed)
    return net


def build_linear(in_channels=1, num_classes=2, kernel=3, seed=0, dtype="float64") -> Network:
    """Single conv layer straight into softmax (a linear score map); used as a reference net."""
    cfg = NetworkConfig(in_channels=in_channels, num_classes=num_classes, depth=1,
                        base_channels=1, kernel=kernel, dropout=0.0, dtype=dtype, seed=seed)
    net = Network(cfg, [Conv3d("linear", in_channels, num_classes, kernel, relu=False, dtype=np.dtype(dtype))], [(-1,)],
                  arch="linear")
    init_weights(net, seed)
    return net


def rebuild(arch: str, cfg: NetworkConfig) -> Network:
    """Fresh network of a named architecture (used when loading checkpoints)."""
    if arch == "unet":
        return build_unet(cfg)
    if arch == "linear":
        return build_linear(cfg.in_channels, cfg.num_classes, cfg.kernel, cfg.seed, cfg.dtype)
    raise ValueError(f"unknown architecture {arch!r}")


def init_weights(net: Network, seed: int):
    rng = np.random.default_rng([seed, 0x1417])
    for layer in net.layers:
        if isinstance(layer, Conv3d):
            layer.init_he(rng)
    net.set_seed(seed)


def forward(net: Network, x, mode="infer"):
    return net.forward(x, mode=mode)


def backward_and_step(net: Network, x, target, lr):
    """One SGD step on mean per-voxel CE; returns the loss before the update."""
    loss = net.loss_and_backward(x, target, mode="train")
    net.sgd_step(lr)
    return loss
