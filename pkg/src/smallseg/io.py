"""VVOL1 volume files and atomic file writes.

A VVOL1 file is one ASCII magic line, one line of compact JSON header, then
the raw little-endian payload in C order (x slowest)::

    VVOL1
    {"dims": [..], "kind": "float32", "payload_bytes": N, "sha256": "..", "spacing": [..]}
    <payload>
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .volume import LabelMap, Volume

MAGIC = b"VVOL1"
KINDS = {"float32": "<f4", "float64": "<f8", "uint8": "|u1"}
INTENSITY_KINDS = ("float32", "float64")
MAX_HEADER = 1 << 16


class VolumeFormatError(ValueError):
    """Malformed, truncated, or corrupted volume file."""


class ValueKindError(VolumeFormatError):
    """File holds a different value kind than the caller asked for."""


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, fsync, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_volume(vol) -> bytes:
    if isinstance(vol, LabelMap):
        kind = "uint8"
    elif isinstance(vol, Volume):
        kind = vol.data.dtype.name
        if kind not in INTENSITY_KINDS:
            raise TypeError(f"cannot store intensity dtype {kind}")
    else:
        raise TypeError(f"expected Volume or LabelMap, got {type(vol).__name__}")
    payload = np.ascontiguousarray(vol.data, dtype=KINDS[kind]).tobytes()
    header = {
        "dims": list(vol.dims),
        "spacing": [float(s) for s in vol.spacing],
        "kind": kind,
        "byte_order": "little",
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    return MAGIC + b"\n" + json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def decode_volume(blob: bytes, expect=None, source="<bytes>"):
    """Parse VVOL1 bytes. ``expect`` is "intensity", "label", or None for either."""
    if not blob.startswith(MAGIC + b"\n"):
        raise VolumeFormatError(f"{source}: bad magic, not a VVOL1 file")
    end = blob.find(b"\n", len(MAGIC) + 1, len(MAGIC) + 1 + MAX_HEADER)
    if end < 0:
        raise VolumeFormatError(f"{source}: header line missing or too long")
    try:
        header = json.loads(blob[len(MAGIC) + 1:end])
        dims = tuple(int(d) for d in header["dims"])
        spacing = tuple(float(s) for s in header["spacing"])
        kind = header["kind"]
        declared = int(header["payload_bytes"])
        digest = header["sha256"]
    except (ValueError, KeyError, TypeError) as exc:
        raise VolumeFormatError(f"{source}: unreadable header ({exc})") from None
    if header.get("byte_order", "little") != "little":
        raise VolumeFormatError(f"{source}: unsupported byte order {header['byte_order']!r}")
    if kind not in KINDS:
        raise VolumeFormatError(f"{source}: unknown value kind {kind!r}")
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"{source}: bad dims {dims}")
    itemsize = np.dtype(KINDS[kind]).itemsize
    expected = int(np.prod(dims)) * itemsize
    if declared != expected:
        raise VolumeFormatError(
            f"{source}: header declares {declared} payload bytes but dims {dims} x {itemsize} need {expected}"
        )
    payload = blob[end + 1:]
    if len(payload) != expected:
        raise VolumeFormatError(f"{source}: payload length mismatch, expected {expected} bytes, found {len(payload)}")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise VolumeFormatError(f"{source}: payload checksum mismatch")
    is_label = kind == "uint8"
    if expect == "intensity" and is_label:
        raise ValueKindError(f"{source}: holds a label map (uint8), expected intensities")
    if expect == "label" and not is_label:
        raise ValueKindError(f"{source}: holds intensities ({kind}), expected a label map")
    data = np.frombuffer(payload, dtype=KINDS[kind]).reshape(dims).astype(np.dtype(KINDS[kind]).newbyteorder("="))
    return LabelMap(data, spacing) if is_label else Volume(data, spacing)


def write_volume(path, vol):
    atomic_write_bytes(path, encode_volume(vol))


def read_volume(path, expect=None):
    """Read a Volume or LabelMap. ``expect`` ("intensity" / "label") enforces the kind."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"volume file not found: {path}") from None
    return decode_volume(blob, expect, str(path))


DATASET_MANIFEST = "dataset.json"


def write_dataset(out_dir, cases, split, meta=None):
    """Write (image, labels) pairs as VVOL1 files plus a ``dataset.json`` index.

    ``split`` maps "train" / "val" / "test" to case index lists.
    """
    out_dir = Path(out_dir)
    entries = []
    for i, (image, labels) in enumerate(cases):
        img_name, lab_name = f"case_{i:03d}_image.vvol", f"case_{i:03d}_labels.vvol"
        write_volume(out_dir / img_name, image)
        write_volume(out_dir / lab_name, labels)
        entries.append({"image": img_name, "labels": lab_name})
    manifest = {"cases": entries, "split": {k: list(v) for k, v in split.items()}, "meta": meta or {}}
    atomic_write_text(out_dir / DATASET_MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_dataset(data_dir):
    """Returns (cases, split, meta) from a directory written by ``write_dataset``."""
    data_dir = Path(data_dir)
    try:
        manifest = json.loads((data_dir / DATASET_MANIFEST).read_text())
        entries, split = manifest["cases"], manifest["split"]
    except FileNotFoundError:
        raise FileNotFoundError(f"no {DATASET_MANIFEST} in {data_dir}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise VolumeFormatError(f"{data_dir / DATASET_MANIFEST}: invalid dataset index ({exc})") from None
    cases = [
        (read_volume(data_dir / e["image"], "intensity"), read_volume(data_dir / e["labels"], "label"))
        for e in entries
    ]
    return cases, {k: [int(i) for i in v] for k, v in split.items()}, manifest.get("meta", {})
