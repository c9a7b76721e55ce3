import numpy as np
import pytest

from smallseg.nn.gradcheck import gradient_check, kink_signature, relative_error, toy_problem
from smallseg.nn.layers import Conv3d, Dropout, ShapeError
from smallseg.nn.network import (
    NetworkConfig,
    analytic_parameter_count,
    backward_and_step,
    build_linear,
    build_unet,
    rebuild,
)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_layer_count(depth):
    net = build_unet(NetworkConfig(depth=depth, base_channels=2))
    assert net.layer_count() == 7 * depth + 4


def test_default_config():
    cfg = NetworkConfig()
    assert (cfg.num_classes, cfg.depth, cfg.base_channels, cfg.kernel, cfg.dropout) == (21, 3, 8, 3, 0.5)
    assert build_unet(cfg).layer_count() == 25


@pytest.mark.parametrize("cfg", [
    NetworkConfig(),
    NetworkConfig(depth=2, base_channels=4, num_classes=3),
    NetworkConfig(depth=1, base_channels=3, in_channels=2, kernel=5, num_classes=4),
])
def test_registry_count_matches_analytic(cfg):
    net = build_unet(cfg)
    assert net.parameter_count() == analytic_parameter_count(cfg)


def test_registry_names_stable_and_live():
    net = build_unet(NetworkConfig(depth=2, base_channels=4, num_classes=3))
    reg = net.parameters()
    assert list(reg)[:2] == ["enc0.conv1.weight", "enc0.conv1.bias"]
    assert list(reg)[-1] == "head.bias"
    reg["head.bias"][0] = 5.0
    assert net.parameters()["head.bias"][0] == 5.0


@pytest.mark.parametrize("bad", [
    dict(depth=0), dict(num_classes=1), dict(dropout=1.0), dict(kernel=2), dict(dtype="int8"),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        NetworkConfig(**bad)


def test_he_init_deterministic_and_scaled():
    a = build_unet(NetworkConfig(depth=2, base_channels=8, num_classes=3, seed=4))
    b = build_unet(NetworkConfig(depth=2, base_channels=8, num_classes=3, seed=4))
    c = build_unet(NetworkConfig(depth=2, base_channels=8, num_classes=3, seed=5))
    for name, arr in a.parameters().items():
        np.testing.assert_array_equal(arr, b.parameters()[name])
    w = a.parameters()["enc1.conv2.weight"]
    assert np.std(w) == pytest.approx(np.sqrt(2 / (16 * 27)), rel=0.1)
    assert not np.array_equal(w, c.parameters()["enc1.conv2.weight"])
    assert all(np.all(arr == 0) for n, arr in a.parameters().items() if n.endswith("bias"))


def test_forward_probabilities_and_odd_dims():
    net = build_unet(NetworkConfig(depth=2, base_channels=2, num_classes=4, dropout=0.5))
    x = np.random.default_rng(0).random((1, 7, 9, 5))
    p = net.forward(x)
    assert p.shape == (4, 7, 9, 5)
    assert np.max(np.abs(p.sum(axis=0) - 1)) < 1e-12
    np.testing.assert_array_equal(p, net.forward(x))  # infer mode is deterministic


def test_dropout_only_in_train_mode():
    net = build_unet(NetworkConfig(depth=1, base_channels=2, num_classes=2, dropout=0.5))
    x = np.random.default_rng(1).random((1, 4, 4, 4))
    net.set_seed(0)
    a = net.forward(x, mode="train")
    b = net.forward(x, mode="train")
    assert not np.array_equal(a, b)
    assert any(isinstance(l, Dropout) for l in net.layers)


def test_input_shape_errors():
    net = build_unet(NetworkConfig(depth=1, base_channels=2, num_classes=2))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 4, 4, 4)))
    with pytest.raises(ShapeError):
        net.loss_and_backward(np.zeros((1, 4, 4, 4)), np.zeros((4, 4, 3), dtype=int))
    with pytest.raises(ValueError):
        net.loss_and_backward(np.zeros((1, 4, 4, 4)), np.full((4, 4, 4), 2))


def test_first_conv_skips_input_gradient():
    net = build_unet(NetworkConfig(depth=1, base_channels=2, num_classes=2))
    convs = [l for l in net.layers if isinstance(l, Conv3d)]
    assert convs[0].input_grad is False
    assert all(c.input_grad for c in convs[1:])


def test_sgd_reduces_loss_on_fixed_sample():
    net = build_unet(NetworkConfig(depth=1, base_channels=4, num_classes=2, dropout=0.0, seed=1))
    x = np.zeros((1, 8, 8, 8))
    x[0, 2:6, 2:6, 2:6] = 1.0
    y = (x[0] > 0).astype(int)
    first = backward_and_step(net, x, y, 0.1)
    for _ in range(30):
        last = backward_and_step(net, x, y, 0.1)
    assert last < 0.5 * first


def test_float32_network_stays_float32():
    net = build_unet(NetworkConfig(depth=1, base_channels=2, num_classes=2, dtype="float32"))
    p = net.forward(np.zeros((1, 4, 4, 4)))
    assert p.dtype == np.float32
    net.loss_and_backward(np.zeros((1, 4, 4, 4)), np.zeros((4, 4, 4), dtype=int))
    assert all(g.dtype == np.float32 for g in net.gradients().values())


def test_input_offset_shifts_the_input():
    x = np.random.default_rng(2).random((1, 6, 6, 4))
    shifted = build_unet(NetworkConfig(num_classes=3, depth=1, base_channels=2, dropout=0.0, seed=4,
                                       input_offset=0.5))
    plain = build_unet(NetworkConfig(num_classes=3, depth=1, base_channels=2, dropout=0.0, seed=4))
    np.testing.assert_array_equal(shifted.forward(x), plain.forward(x - 0.5))
    with pytest.raises(ValueError):
        NetworkConfig(input_offset=float("nan"))


def test_rebuild_architectures():
    lin = build_linear(num_classes=3, seed=2)
    assert lin.arch == "linear" and lin.layer_count() == 1
    again = rebuild("linear", lin.config)
    for name, arr in lin.parameters().items():
        np.testing.assert_array_equal(arr, again.parameters()[name])
    with pytest.raises(ValueError):
        rebuild("resnet", lin.config)


def test_gradcheck_small_net_passes():
    net, x, target = toy_problem(seed=1, size=4, depth=1, base_channels=2)
    result = gradient_check(net, x, target)
    assert result.checked == result.total
    assert result.max_rel_error < 1e-4


def test_gradcheck_detects_corrupted_gradient():
    net, x, target = toy_problem(seed=1, size=4, depth=1, base_channels=2)

    def corrupt(grads):
        grads["head.weight"] = grads["head.weight"] * 1.5
        return grads

    assert gradient_check(net, x, target, corrupt=corrupt).max_rel_error > 1e-2


def test_gradcheck_needs_float64():
    net = build_unet(NetworkConfig(depth=1, base_channels=2, num_classes=2, dtype="float32"))
    with pytest.raises(ValueError):
        gradient_check(net, np.zeros((1, 4, 4, 4)), np.zeros((4, 4, 4), dtype=int))


def test_kink_signature_tracks_relu_pattern():
    net, x, _ = toy_problem(seed=0, size=4, depth=1, base_channels=2)
    net.forward(x, cache=True)
    s1 = kink_signature(net)
    net.forward(x, cache=True)
    assert kink_signature(net) == s1
    net.parameters()["enc0.conv1.bias"][:] = -1e3  # every first-layer ReLU off
    net.forward(x, cache=True)
    assert kink_signature(net) != s1


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)
