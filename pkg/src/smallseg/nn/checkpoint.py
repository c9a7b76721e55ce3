"""Weight checkpoints: a JSON manifest plus a little-endian float64 blob.

``save_checkpoint("run/model.json", net)`` writes ``run/model.json`` and
``run/model.bin``. Parameters are stored in registry order; float32 networks
round-trip exactly because every float32 value is representable in float64.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..io import atomic_write_bytes, atomic_write_text
from .network import Network, NetworkConfig, rebuild

FORMAT = "smallseg-checkpoint/1"


class CheckpointError(ValueError):
    """Missing, mismatched, or corrupted checkpoint files."""


def _blob_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".bin")


def save_checkpoint(path, net: Network, meta=None):
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, arr in net.parameters().items():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += int(arr.size)
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "arch": net.arch,
        "config": net.config.to_dict(),
        "parameters": entries,
        "blob": _blob_path(path).name,
        "blob_bytes": len(blob),
        "sha256": hashlib.sha256(blob).hexdigest(),
        "meta": meta or {},
    }
    # blob first: a manifest never points at a blob that is not fully written
    atomic_write_bytes(_blob_path(path), blob)
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns (network, meta)."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint manifest not found: {path}") from None
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: manifest is not valid JSON ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} manifest")
    try:
        cfg = NetworkConfig(**manifest["config"])
        net = rebuild(manifest["arch"], cfg)
        entries = manifest["parameters"]
        blob_file = path.parent / manifest["blob"]
        declared = int(manifest["blob_bytes"])
        digest = manifest["sha256"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid manifest ({exc})") from None
    try:
        blob = blob_file.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"{path}: weight blob {blob_file} not found") from None
    if len(blob) != declared:
        raise CheckpointError(f"{blob_file}: length mismatch, expected {declared} bytes, found {len(blob)}")
    if hashlib.sha256(blob).hexdigest() != digest:
        raise CheckpointError(f"{blob_file}: checksum mismatch")
    values = np.frombuffer(blob, dtype="<f8")
    params = net.parameters()
    if [e["name"] for e in entries] != list(params):
        raise CheckpointError(f"{path}: parameter names do not match architecture {manifest['arch']!r}")
    for e in entries:
        arr = params[e["name"]]
        if tuple(e["shape"]) != arr.shape or e["offset"] + e["count"] > values.size:
            raise CheckpointError(f"{path}: bad entry for {e['name']}")
        arr[...] = values[e["offset"]:e["offset"] + e["count"]].reshape(arr.shape)
    return net, manifest.get("meta", {})
