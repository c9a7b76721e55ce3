import json

import numpy as np
import pytest

from smallseg.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from smallseg.nn.network import NetworkConfig, build_linear, build_unet


def _trained(dtype):
    net = build_unet(NetworkConfig(depth=2, base_channels=2, num_classes=3, dtype=dtype, seed=3))
    rng = np.random.default_rng(0)
    for arr in net.parameters().values():
        arr += rng.standard_normal(arr.shape).astype(arr.dtype) * 1e-3
    return net


@pytest.mark.parametrize("dtype", ["float64", "float32"])
def test_round_trip_bitwise(tmp_path, dtype):
    net = _trained(dtype)
    save_checkpoint(tmp_path / "model.json", net, {"organs": [2, 4]})
    back, meta = load_checkpoint(tmp_path / "model.json")
    assert meta == {"organs": [2, 4]}
    assert back.config == net.config
    for name, arr in net.parameters().items():
        other = back.parameters()[name]
        assert other.dtype == arr.dtype and other.tobytes() == arr.tobytes()


def test_blob_is_little_endian_float64(tmp_path):
    net = build_linear(num_classes=2, kernel=1, seed=0)
    save_checkpoint(tmp_path / "m.json", net)
    blob = (tmp_path / "m.bin").read_bytes()
    expected = np.concatenate([a.ravel() for a in net.parameters().values()]).astype("<f8").tobytes()
    assert blob == expected
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert [p["name"] for p in manifest["parameters"]] == ["linear.weight", "linear.bias"]
    assert manifest["arch"] == "linear"
    back, _ = load_checkpoint(tmp_path / "m.json")
    assert back.arch == "linear"


def test_corruption_detected(tmp_path):
    net = build_linear(num_classes=2, seed=0)
    path = tmp_path / "m.json"
    save_checkpoint(path, net)
    blob = (tmp_path / "m.bin").read_bytes()

    (tmp_path / "m.bin").write_bytes(blob[:-8])
    with pytest.raises(CheckpointError, match="length mismatch"):
        load_checkpoint(path)
    flipped = bytearray(blob)
    flipped[5] ^= 1
    (tmp_path / "m.bin").write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)
    (tmp_path / "m.bin").unlink()
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(path)
    path.write_text("{broken")
    with pytest.raises(CheckpointError, match="JSON"):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json")


def test_manifest_architecture_mismatch(tmp_path):
    path = tmp_path / "m.json"
    save_checkpoint(path, build_linear(num_classes=2, seed=0))
    manifest = json.loads(path.read_text())
    manifest["parameters"][0]["name"] = "other.weight"
    path.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="names"):
        load_checkpoint(path)
