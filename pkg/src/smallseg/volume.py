"""Volumes, label maps and the deterministic preprocessing applied before training.

Arrays are indexed ``data[x, y, z]`` and stored in C order (z fastest).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_LABEL = 20
AIR_HU = -1000.0

AXES = {"X": 0, "Y": 1, "Z": 2}
# in-plane axis pairs for a right-handed rotation about each axis
_PLANES = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


def _check_spacing(spacing):
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(s > 0 and math.isfinite(s) for s in spacing):
        raise ValueError(f"spacing must be three positive finite values, got {spacing}")
    return spacing


def first_nonfinite(data: np.ndarray):
    """Index of the first non-finite voxel (x, y, z), or None."""
    bad = ~np.isfinite(data)
    if not bad.any():
        return None
    return tuple(int(i) for i in np.argwhere(bad)[0])


class NonFiniteVoxelError(ValueError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite intensity at voxel {index}")


@dataclass
class Volume:
    """Scalar 3-D grid (CT intensities, dose, probabilities) with mm spacing."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be 3-D with every dim >= 1, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        bad = first_nonfinite(data)
        if bad is not None:
            raise NonFiniteVoxelError(bad)
        self.data = data
        self.spacing = _check_spacing(self.spacing)

    @property
    def dims(self):
        return tuple(self.data.shape)

    def with_data(self, data, spacing=None):
        return Volume(data, self.spacing if spacing is None else spacing)


@dataclass
class LabelMap:
    """Per-voxel organ index (organ registry numbering, 0 = background)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"label data must be 3-D with every dim >= 1, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > MAX_LABEL):
                raise ValueError(f"label values must lie in 0..{MAX_LABEL}")
            data = data.astype(np.uint8)
        elif data.size and data.max() > MAX_LABEL:
            raise ValueError(f"label values must lie in 0..{MAX_LABEL}, found {int(data.max())}")
        self.data = data
        self.spacing = _check_spacing(self.spacing)

    @property
    def dims(self):
        return tuple(self.data.shape)

    def with_data(self, data, spacing=None):
        return LabelMap(data, self.spacing if spacing is None else spacing)

    def mask(self, label: int) -> np.ndarray:
        return self.data == label


@dataclass(frozen=True)
class WindowSpec:
    """Symmetric intensity window [-half_width, +half_width]."""

    half_width: float

    def __post_init__(self):
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError(f"window half-width must be > 0, got {self.half_width}")


@dataclass(frozen=True)
class CropBox:
    """Voxel box; ``lo`` inclusive, ``hi`` exclusive."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate crop box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def shape(self):
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def center(self):
        return tuple((a + b - 1) / 2 for a, b in zip(self.lo, self.hi))

    def within(self, dims) -> bool:
        return all(0 <= a and b <= n for a, b, n in zip(self.lo, self.hi, dims))


def window_normalize(vol: Volume, w: WindowSpec | float) -> Volume:
    """Clamp to [-w, w] and map affinely onto [0, 1]."""
    half = w.half_width if isinstance(w, WindowSpec) else WindowSpec(float(w)).half_width
    bad = first_nonfinite(vol.data)
    if bad is not None:
        raise NonFiniteVoxelError(bad)
    clipped = np.clip(vol.data.astype(np.float64), -half, half)
    return vol.with_data((clipped + half) / (2.0 * half))


def crop(vol, box: CropBox, pad_value=None):
    """Extract ``box`` from a Volume or LabelMap, padding outside the source extent
    (air for intensities, background for labels, unless ``pad_value`` is given).
    """
    if pad_value is None:
        pad_value = 0 if isinstance(vol, LabelMap) else AIR_HU
    dims = vol.dims
    src_lo = [max(a, 0) for a in box.lo]
    src_hi = [min(b, n) for b, n in zip(box.hi, dims)]
    if any(a >= b for a, b in zip(src_lo, src_hi)):
        raise ValueError(f"crop box lo={box.lo} hi={box.hi} lies entirely outside volume of dims {dims}")
    out = np.full(box.shape, pad_value, dtype=vol.data.dtype)
    dst = tuple(slice(a - l, b - l) for a, b, l in zip(src_lo, src_hi, box.lo))
    src = tuple(slice(a, b) for a, b in zip(src_lo, src_hi))
    out[dst] = vol.data[src]
    return vol.with_data(out)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def mm_box_around(center, extent_mm, spacing, dims) -> CropBox:
    """Box of ``extent_mm`` physical size centred on a voxel, shifted to fit inside ``dims``."""
    if any(e <= 0 for e in extent_mm):
        raise ValueError(f"extent must be positive, got {extent_mm}")
    lo, hi = [], []
    for c, e, s, n in zip(center, extent_mm, spacing, dims):
        size = min(max(round_half_away(e / s), 1), n)
        a = int(c) - size // 2
        a = min(max(a, 0), n - size)
        lo.append(a)
        hi.append(a + size)
    return CropBox(tuple(lo), tuple(hi))


def center_of_mass(mask: LabelMap, label: int):
    """Mean voxel coordinate of ``label``, rounded to the nearest voxel."""
    idx = np.argwhere(mask.data == label)
    if len(idx) == 0:
        raise ValueError(f"label {label} not present in mask")
    mean = idx.mean(axis=0)
    return tuple(round_half_away(float(m)) for m in mean)


def augmentation_angles(start=-25, stop=25, step=3):
    """Rotation angles (degrees) for augmentation; ``stop`` is exclusive."""
    return list(range(start, stop, step))


def _trig(angle_deg):
    a = float(angle_deg) % 360.0
    exact = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if a in exact:
        return exact[a]
    rad = math.radians(a)
    return math.cos(rad), math.sin(rad)


def _sample(data, coords, mode, fill):
    """Sample ``data`` at fractional voxel coordinates (3, ...). Out-of-range -> fill."""
    dims = data.shape
    tol = 1e-9
    inside = np.ones(coords.shape[1:], dtype=bool)
    for ax in range(3):
        inside &= (coords[ax] >= -tol) & (coords[ax] <= dims[ax] - 1 + tol)
    if mode == "nearest":
        idx = [np.clip(np.floor(coords[ax] + 0.5).astype(np.intp), 0, dims[ax] - 1) for ax in range(3)]
        out = data[idx[0], idx[1], idx[2]]
    elif mode == "trilinear":
        lo, frac, hi = [], [], []
        for ax in range(3):
            c = np.clip(coords[ax], 0.0, dims[ax] - 1)
            f0 = np.floor(c)
            i0 = f0.astype(np.intp)
            lo.append(i0)
            hi.append(np.minimum(i0 + 1, dims[ax] - 1))
            frac.append(c - f0)
        d = data.astype(np.float64, copy=False)
        out = 0.0
        for bx in (0, 1):
            wx = frac[0] if bx else 1.0 - frac[0]
            ix = hi[0] if bx else lo[0]
            for by in (0, 1):
                wy = frac[1] if by else 1.0 - frac[1]
                iy = hi[1] if by else lo[1]
                for bz in (0, 1):
                    wz = frac[2] if bz else 1.0 - frac[2]
                    iz = hi[2] if bz else lo[2]
                    out = out + wx * wy * wz * d[ix, iy, iz]
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    return np.where(inside, out, fill).astype(data.dtype)


def rotate(vol, axis, angle_deg, mode=None, fill=None):
    """Rotate about the volume centre around one axis by inverse-mapping resampling.

    Defaults: trilinear with air fill for a Volume; nearest with background fill
    for a LabelMap. Dims are preserved; spacing is honoured so rotation is
    physical even on anisotropic grids.
    """
    is_label = isinstance(vol, LabelMap)
    mode = mode or ("nearest" if is_label else "trilinear")
    if fill is None:
        fill = 0 if is_label else AIR_HU
    ax = AXES[axis.upper()] if isinstance(axis, str) else int(axis)
    if not math.isfinite(angle_deg):
        raise ValueError("angle must be finite")
    if float(angle_deg) % 360.0 == 0.0:
        return vol.with_data(vol.data.copy())
    cos, sin = _trig(angle_deg)
    a, b = _PLANES[ax]
    dims = vol.dims
    sp = vol.spacing
    grid = np.indices(dims, dtype=np.float64)
    center = [(n - 1) / 2.0 for n in dims]
    ua = (grid[a] - center[a]) * sp[a]
    ub = (grid[b] - center[b]) * sp[b]
    # inverse rotation: source = R(-angle) @ output
    src = grid.copy()
    src[a] = (cos * ua + sin * ub) / sp[a] + center[a]
    src[b] = (-sin * ua + cos * ub) / sp[b] + center[b]
    return vol.with_data(_sample(vol.data, src, mode, fill))


def resample(vol, target_dims, mode=None):
    """Resample onto ``target_dims`` covering the same physical extent (voxel-centre aligned)."""
    is_label = isinstance(vol, LabelMap)
    mode = mode or ("nearest" if is_label else "trilinear")
    target_dims = tuple(int(t) for t in target_dims)
    if len(target_dims) != 3 or min(target_dims) < 1:
        raise ValueError(f"target dims must be three values >= 1, got {target_dims}")
    dims = vol.dims
    new_spacing = tuple(s * n / t for s, n, t in zip(vol.spacing, dims, target_dims))
    if target_dims == dims:
        return vol.with_data(vol.data.copy())
    axes = [(np.arange(t) + 0.5) * (n / t) - 0.5 for n, t in zip(dims, target_dims)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"))
    for ax in range(3):
        np.clip(coords[ax], 0.0, dims[ax] - 1, out=coords[ax])
    fill = 0
    return vol.with_data(_sample(vol.data, coords, mode, fill), spacing=new_spacing)


__all__ = [
    "AIR_HU", "Volume", "LabelMap", "WindowSpec", "CropBox", "NonFiniteVoxelError",
    "window_normalize", "crop", "mm_box_around", "center_of_mass", "rotate",
    "augmentation_angles", "resample", "round_half_away",
]
