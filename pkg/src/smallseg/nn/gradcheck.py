"""Central-difference verification of the analytic gradients."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .layers import Conv3d, MaxPool
from .network import Network, NetworkConfig, build_unet


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    checked: int
    total: int
    kink_retries: int = 0


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(net: Network, x, target, eps=1e-4, max_params=10_000, seed=0,
                   corrupt=None) -> GradCheckResult:
    """Compare analytic and central-difference gradients of the mean CE loss.

    Every parameter is checked unless there are more than ``max_params``, in
    which case a seeded random subset of that size is used. ``corrupt`` may
    rewrite the analytic gradient dict before comparison (fault injection).

    Central differences are only valid where the loss is smooth over the
    stencil. If the +/-eps evaluations flip a ReLU or change a max-pool
    winner, the parameter is re-measured with eps/10, down to 1e-8.
    """
    if net.dtype != np.float64:
        raise ValueError("gradient check needs a float64 network")
    net.loss_and_backward(x, target, mode="infer")
    analytic = {k: g.copy() for k, g in net.gradients().items()}
    if corrupt is not None:
        analytic = corrupt(analytic)
    params = net.parameters()
    flat = [(name, i) for name, arr in params.items() for i in range(arr.size)]
    total = len(flat)
    if total > max_params:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(total, size=max_params, replace=False))
        flat = [flat[i] for i in pick]

    t = np.asarray(target).astype(np.intp)[None]

    def loss():
        p = net.forward(x, mode="infer", cache=True)
        value = float(-np.log(np.maximum(np.take_along_axis(p, t, axis=0)[0], 1e-12)).mean())
        return value, kink_signature(net)

    _, base_sig = loss()
    worst, worst_name, retries = 0.0, "", 0
    for name, i in flat:
        arr = params[name].reshape(-1)
        old = arr[i]
        step = eps
        while True:
            arr[i] = old + step
            up, sig_up = loss()
            arr[i] = old - step
            down, sig_down = loss()
            arr[i] = old
            if (sig_up == base_sig and sig_down == base_sig) or step <= 1e-8:
                break
            step /= 10
            retries += 1
        numeric = (up - down) / (2 * step)
        err = relative_error(analytic[name].reshape(-1)[i], numeric)
        if err > worst:
            worst, worst_name = err, f"{name}[{i}]"
    return GradCheckResult(float(worst), worst_name, len(flat), total, retries)


def kink_signature(net: Network):
    """Digest of every ReLU on/off pattern and max-pool winner from the last cached forward."""
    h = hashlib.blake2b(digest_size=16)
    for layer in net.layers:
        if isinstance(layer, Conv3d) and layer.relu:
            h.update(np.packbits(layer._out > 0).tobytes())
        elif isinstance(layer, MaxPool):
            h.update(layer._arg.astype(np.uint8).tobytes())
    return h.digest()


def toy_problem(seed=0, size=8, depth=2, base_channels=4, num_classes=3):
    """The default gradient-check setup: small float64 U-net, dropout off, random data."""
    cfg = NetworkConfig(in_channels=1, num_classes=num_classes, depth=depth,
                        base_channels=base_channels, dropout=0.0, dtype="float64", seed=seed)
    net = build_unet(cfg)
    rng = np.random.default_rng([seed, 0x6C])
    x = rng.random((1, size, size, size))
    target = rng.integers(0, num_classes, size=(size, size, size))
    return net, x, target
