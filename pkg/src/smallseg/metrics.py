"""Overlap and distance metrics for segmentations, plus dose-to-structure statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume


def _as_mask(m):
    m = np.asarray(m)
    return m if m.dtype == bool else m.astype(bool)


def _check_dims(a, b):
    if a.shape != b.shape:
        raise ValueError(f"mask dims differ: {a.shape} vs {b.shape}")


def dice(a, b) -> float:
    """2|A and B| / (|A| + |B|); two empty masks agree perfectly (1.0)."""
    a, b = _as_mask(a), _as_mask(b)
    _check_dims(a, b)
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / (na + nb)


def _boundary(mask):
    # voxels of the mask with at least one 6-neighbour outside it
    interior = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(3, 1),
                                      border_value=0)
    return mask & ~interior


def _max_min_distance(points_a, points_b, spacing, chunk=2048):
    """max over a of min over b of the Euclidean distance in mm."""
    sa = points_a.astype(np.float64)
    sb = points_b.astype(np.float64)
    best = 0.0
    for start in range(0, len(sa), chunk):
        block = sa[start:start + chunk]
        d2 = np.zeros((len(block), len(sb)))
        for ax in range(3):
            diff = (block[:, ax, None] - sb[None, :, ax]) * spacing[ax]
            d2 += diff * diff
        nearest = d2.min(axis=1)
        top = float(nearest.max())
        if top > best:
            best = top
    return math.sqrt(best)


def directed_hausdorff(a, b, spacing=(1.0, 1.0, 1.0), method="brute") -> float:
    """h(A, B) = max_{a in A} min_{b in B} ||a - b|| over voxel centres, in mm.

    ``brute`` scans A \\ B against the 6-connected boundary of B, which is
    exact (a nearest B voxel to any outside point is a boundary voxel).
    ``edt`` reads the answer off a Euclidean distance transform of B.
    """
    a, b = _as_mask(a), _as_mask(b)
    _check_dims(a, b)
    if not a.any() or not b.any():
        raise ValueError("Hausdorff distance is undefined for an empty mask")
    spacing = tuple(float(s) for s in spacing)
    if method == "edt":
        dist = ndimage.distance_transform_edt(~b, sampling=spacing)
        return float(dist[a].max())
    if method != "brute":
        raise ValueError(f"unknown method {method!r}")
    outside = a & ~b
    if not outside.any():
        return 0.0
    return _max_min_distance(np.argwhere(outside), np.argwhere(_boundary(b)), spacing)


def hausdorff(a, b, spacing=(1.0, 1.0, 1.0), method="brute") -> float:
    """Symmetric Hausdorff distance max(h(A, B), h(B, A)) in mm."""
    return max(directed_hausdorff(a, b, spacing, method), directed_hausdorff(b, a, spacing, method))


def aggregate(values):
    """Mean and sample standard deviation (n - 1); std is None for a single value."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("cannot aggregate an empty list")
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if vals.size >= 2 else None
    return mean, std


def dose_stats(dose: Volume | np.ndarray, mask) -> tuple[float, float]:
    """(max, mean) dose over the voxels of ``mask``.

    The mean is ``fsum / count``: the sum is exactly rounded, so the result does
    not depend on voxel order.
    """
    data = dose.data if isinstance(dose, Volume) else np.asarray(dose)
    m = _as_mask(mask)
    _check_dims(data, m)
    if not m.any():
        raise ValueError("dose statistics need a non-empty structure mask")
    values = data[m].astype(np.float64)
    return float(values.max()), math.fsum(values.tolist()) / values.size


@dataclass
class OrganStats:
    organ: int
    dice_mean: float
    dice_std: float | None
    hd_mean_mm: float | None
    hd_std_mm: float | None
    n_cases: int
    n_hd: int

    def to_dict(self):
        return dict(self.__dict__)


def organ_stats(organ, dices, hds) -> OrganStats:
    """Summarise per-case Dice and HD values; missing HD values (None) are skipped."""
    dm, ds = aggregate(dices)
    present = [h for h in hds if h is not None]
    hm, hs = aggregate(present) if present else (None, None)
    return OrganStats(int(organ), dm, ds, hm, hs, len(list(dices)), len(present))
