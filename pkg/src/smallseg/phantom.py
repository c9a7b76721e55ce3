"""Synthetic head phantoms with eyes and lenses, ground-truth labels and toy dose grids.

Geometry is specified in mm relative to the volume centre: +x is the
patient's left, +y anterior, +z superior.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .organs import LEFT_EYE, LEFT_LENS, RIGHT_EYE, RIGHT_LENS
from .seeding import derive_seed
from .volume import LabelMap, Volume

DEFAULT_BANDS = {"air": -1000.0, "tissue": 40.0, "eye": 20.0, "lens": 80.0, "bone": 1000.0}

_EYE_LABELS = {"left": (LEFT_EYE, LEFT_LENS), "right": (RIGHT_EYE, RIGHT_LENS)}


@dataclass
class PhantomParams:
    dims: tuple = (48, 56, 48)
    spacing: tuple = (4.0, 4.0, 4.0)
    head_center_mm: tuple = (0.0, 0.0, 0.0)
    head_semi_axes_mm: tuple = (70.0, 90.0, 80.0)
    skull_thickness_mm: float = 6.0
    # eye centres for the "left"/"right" eye, relative to the head centre
    eye_offsets_mm: dict = field(default_factory=lambda: {"left": (32.0, 66.0, 10.0),
                                                          "right": (-32.0, 66.0, 10.0)})
    eyes: tuple = ("left", "right")
    eye_radius_mm: float = 12.0
    lens_semi_axes_mm: tuple = (4.5, 2.0, 4.5)
    lens_depth_mm: float = 7.5  # lens centre sits this far anterior of the eye centre
    orbit_gap_mm: float = 3.0
    orbit_thickness_mm: float = 3.0
    bands: dict = field(default_factory=lambda: dict(DEFAULT_BANDS))
    noise_std: float = 15.0
    seed: int = 0
    jitter_mm: float = 2.0
    spacing_range: tuple | None = None  # in-plane (x, y) spacing drawn per case

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.head_center_mm = tuple(float(v) for v in self.head_center_mm)
        self.head_semi_axes_mm = tuple(float(v) for v in self.head_semi_axes_mm)
        self.lens_semi_axes_mm = tuple(float(v) for v in self.lens_semi_axes_mm)
        self.eyes = tuple(self.eyes)
        self.eye_offsets_mm = {k: tuple(float(v) for v in val) for k, val in self.eye_offsets_mm.items()}
        self.bands = {**DEFAULT_BANDS, **self.bands}
        if self.spacing_range is not None:
            self.spacing_range = tuple(float(v) for v in self.spacing_range)
        self.validate()

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"bad dims {self.dims}")
        if min(self.spacing) <= 0:
            raise ValueError("spacing must be positive")
        for side in self.eyes:
            if side not in _EYE_LABELS or side not in self.eye_offsets_mm:
                raise ValueError(f"unknown eye {side!r}")
        if not all(math.isfinite(v) for v in self.bands.values()):
            raise ValueError("intensity bands must be finite")
        for name in ("eye", "lens"):
            if abs(self.bands[name]) >= 100:
                raise ValueError(f"{name} intensity must lie within +-100 so a 100 window resolves it")
        if self.noise_std < 0 or self.jitter_mm < 0:
            raise ValueError("noise and jitter must be non-negative")
        if min(self.lens_semi_axes_mm) <= 0 or self.eye_radius_mm <= 0:
            raise ValueError("organ sizes must be positive")
        if _lens_reach(self) >= self.eye_radius_mm:
            raise ValueError("lens does not fit strictly inside the eye")

    @classmethod
    def eye_region(cls, **overrides):
        """32^3 crop at 1 mm around a single left eye (the eye-portion training crop)."""
        base = dict(
            dims=(32, 32, 32),
            spacing=(1.0, 1.0, 1.0),
            head_center_mm=(-32.0, -66.0, -10.0),
            eyes=("left",),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["eye_offsets_mm"] = {k: list(v) for k, v in self.eye_offsets_mm.items()}
        return d


def _lens_reach(params):
    """Largest distance from the eye centre to a point of the lens ellipsoid."""
    a, b, c = params.lens_semi_axes_mm
    theta = np.linspace(0.0, np.pi, 181)[:, None]
    phi = np.linspace(0.0, 2 * np.pi, 361)[None, :]
    x = a * np.sin(theta) * np.cos(phi)
    y = params.lens_depth_mm + b * np.cos(theta) + 0 * phi
    z = c * np.sin(theta) * np.sin(phi)
    return float(np.sqrt(x * x + y * y + z * z).max())


@dataclass
class EyeGeometry:
    side: str
    eye_label: int
    lens_label: int
    center_mm: tuple
    lens_center_mm: tuple


@dataclass
class PhantomGeometry:
    dims: tuple
    spacing: tuple
    eyes: list

    def to_voxel(self, point_mm):
        """mm (relative to the volume centre) -> fractional voxel index."""
        return tuple(p / s + (n - 1) / 2.0 for p, s, n in zip(point_mm, self.spacing, self.dims))


def phantom_geometry(params: PhantomParams, case_seed: int) -> PhantomGeometry:
    rng = np.random.default_rng(derive_seed(case_seed, "geometry"))
    spacing = params.spacing
    if params.spacing_range is not None:
        lo, hi = params.spacing_range
        s = float(rng.uniform(lo, hi))
        spacing = (s, s, spacing[2])
    shift = rng.uniform(-params.jitter_mm, params.jitter_mm, size=3) if params.jitter_mm else np.zeros(3)
    eyes = []
    for side in params.eyes:
        eye_label, lens_label = _EYE_LABELS[side]
        center = tuple(float(h + o + d) for h, o, d in
                       zip(params.head_center_mm, params.eye_offsets_mm[side], shift))
        lens = (center[0], center[1] + params.lens_depth_mm, center[2])
        eyes.append(EyeGeometry(side, eye_label, lens_label, center, lens))
    return PhantomGeometry(params.dims, spacing, eyes)


def _coords(dims, spacing):
    return [(np.arange(n) - (n - 1) / 2.0) * s for n, s in zip(dims, spacing)]


def generate_phantom(params: PhantomParams, case_seed: int):
    """Render one (Volume, LabelMap) pair; bitwise deterministic in (params, case_seed)."""
    params.validate()
    geo = phantom_geometry(params, case_seed)
    x, y, z = np.meshgrid(*_coords(geo.dims, geo.spacing), indexing="ij", sparse=True)
    bands = params.bands
    image = np.full(geo.dims, bands["air"], dtype=np.float64)
    labels = np.zeros(geo.dims, dtype=np.uint8)

    hc, ha = params.head_center_mm, params.head_semi_axes_mm
    hx, hy, hz = x - hc[0], y - hc[1], z - hc[2]
    head = (hx / ha[0]) ** 2 + (hy / ha[1]) ** 2 + (hz / ha[2]) ** 2 <= 1.0
    inner = [max(a - params.skull_thickness_mm, 1e-6) for a in ha]
    brain_side = (hx / inner[0]) ** 2 + (hy / inner[1]) ** 2 + (hz / inner[2]) ** 2 <= 1.0
    # no skull across the face
    skull = head & ~brain_side & (hy < 0.4 * ha[1])
    image[head] = bands["tissue"]
    image[skull] = bands["bone"]

    for eye in geo.eyes:
        ex, ey, ez = eye.center_mm
        r2 = (x - ex) ** 2 + (y - ey) ** 2 + (z - ez) ** 2
        r_orbit = params.eye_radius_mm + params.orbit_gap_mm
        orbit = (r2 >= r_orbit ** 2) & (r2 <= (r_orbit + params.orbit_thickness_mm) ** 2) & (y < ey) & head
        image[orbit] = bands["bone"]
        eyeball = r2 <= params.eye_radius_mm ** 2
        image[eyeball] = bands["eye"]
        labels[eyeball] = eye.eye_label
        lx, ly, lz = eye.lens_center_mm
        la = params.lens_semi_axes_mm
        lens = ((x - lx) / la[0]) ** 2 + ((y - ly) / la[1]) ** 2 + ((z - lz) / la[2]) ** 2 <= 1.0
        image[lens] = bands["lens"]
        labels[lens] = eye.lens_label

    if params.noise_std > 0:
        rng = np.random.default_rng(derive_seed(case_seed, "noise"))
        image = image + rng.normal(0.0, params.noise_std, size=geo.dims)
    return Volume(image.astype(np.float32), geo.spacing), LabelMap(labels, geo.spacing)


def case_seeds(n, seed):
    return [derive_seed(seed, "case", i) for i in range(n)]


def generate_dataset(n: int, params: PhantomParams, seed: int):
    """``n`` phantom pairs with per-case derived seeds."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_phantom(params, s) for s in case_seeds(n, seed)]


def split_indices(n, fractions=(0.7, 0.1, 0.2)):
    """Partition range(n) into consecutive train/val/test index lists."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n_train = int(math.floor(fractions[0] * n + 0.5))
    n_val = int(math.floor(fractions[1] * n + 0.5))
    n_val = min(n_val, n - n_train)
    idx = list(range(n))
    return idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:]


@dataclass
class Beam:
    """Axis-aligned beam entering from the low (direction=+1) or high (-1) face of ``axis``.

    ``field`` and each entry of ``blocks`` are ((lo_u, lo_v), (hi_u, hi_v))
    voxel rectangles in the two remaining axes (in increasing axis order).
    """

    axis: int
    direction: int = 1
    dose_gy: float = 1.0
    mu_per_mm: float = 0.0
    field: tuple | None = None
    blocks: tuple = ()
    transmission: float = 0.0


def _rect_mask(shape2, rect):
    (u0, v0), (u1, v1) = rect
    m = np.zeros(shape2, dtype=bool)
    m[max(u0, 0):max(u1, 0), max(v0, 0):max(v1, 0)] = True
    return m


def generate_dose_grid(params, beams, spacing=None) -> Volume:
    """Sum of exponentially attenuated slab beams; blocked rectangles pass ``transmission``."""
    dims = tuple(params.dims)
    spacing = tuple(spacing or params.spacing)
    dose = np.zeros(dims, dtype=np.float64)
    for beam in beams:
        ax = beam.axis
        if beam.direction not in (1, -1):
            raise ValueError("beam direction must be +1 or -1")
        n = dims[ax]
        idx = np.arange(n)
        depth = (idx + 0.5) * spacing[ax] if beam.direction == 1 else (n - idx - 0.5) * spacing[ax]
        profile = beam.dose_gy * np.exp(-beam.mu_per_mm * depth)
        other = [a for a in range(3) if a != ax]
        shape2 = (dims[other[0]], dims[other[1]])
        fluence = np.ones(shape2) if beam.field is None else _rect_mask(shape2, beam.field).astype(np.float64)
        for block in beam.blocks:
            fluence[_rect_mask(shape2, block)] *= beam.transmission
        shape = [1, 1, 1]
        shape[ax] = n
        fshape = list(dims)
        fshape[ax] = 1
        dose += profile.reshape(shape) * fluence.reshape(fshape)
    return Volume(dose, spacing)


def lens_sparing_beams(geo: PhantomGeometry, params: PhantomParams, dose_gy=1.0, mu_per_mm=0.005,
                       margin_mm=1.0, transmission=0.05):
    """Parallel-opposed lateral beams with a block over each lens's beam's-eye projection."""
    blocks = []
    a = params.lens_semi_axes_mm
    for eye in geo.eyes:
        c = geo.to_voxel(eye.lens_center_mm)
        lo = (math.floor(c[1] - (a[1] + margin_mm) / geo.spacing[1]),
              math.floor(c[2] - (a[2] + margin_mm) / geo.spacing[2]))
        hi = (math.ceil(c[1] + (a[1] + margin_mm) / geo.spacing[1]) + 1,
              math.ceil(c[2] + (a[2] + margin_mm) / geo.spacing[2]) + 1)
        blocks.append((lo, hi))
    return [
        Beam(axis=0, direction=d, dose_gy=dose_gy, mu_per_mm=mu_per_mm, blocks=tuple(blocks),
             transmission=transmission)
        for d in (1, -1)
    ]


def with_overrides(params: PhantomParams, **kw) -> PhantomParams:
    return replace(params, **kw)
