"""Thresholded inference, full-volume segmentation and eye-centred auto-cropping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.network import Network
from ..organs import LEFT_EYE
from ..volume import (
    CropBox,
    LabelMap,
    Volume,
    WindowSpec,
    center_of_mass,
    crop,
    mm_box_around,
    resample,
    window_normalize,
)
from .training import classes_to_labels

EYE_CROP_MM = (75.0, 75.0, 160.0)


class EmptyPredictionError(ValueError):
    pass


@dataclass
class SegmentationModel:
    """A trained network plus what is needed to run it on raw volumes.

    ``organs[i]`` is the organ index predicted by network class ``i + 1``.
    """

    net: Network
    organs: tuple
    input_dims: tuple | None = None
    window: float = 100.0
    threshold: float = 0.8


def apply_threshold(probs: np.ndarray, t: float, class_thresholds=None) -> np.ndarray:
    """Per voxel: the argmax class (lowest index on ties) if its probability exceeds
    the threshold, else background 0. ``class_thresholds`` maps class -> override.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {t}")
    best = probs.argmax(axis=0)
    p_best = np.take_along_axis(probs, best[None], axis=0)[0]
    limit = np.full(best.shape, t, dtype=np.float64)
    for cls, ct in (class_thresholds or {}).items():
        limit[best == cls] = ct
    return np.where(p_best > limit, best, 0).astype(np.uint8)


def predict_probabilities(model: SegmentationModel, normalized: Volume) -> np.ndarray:
    """Class probabilities on the volume's own grid (resampled through the net input dims)."""
    vol = normalized
    if model.input_dims is not None and tuple(model.input_dims) != vol.dims:
        vol = resample(vol, model.input_dims)
    return model.net.forward(vol.data[None], mode="infer")


def labels_from_probabilities(model, probs, t, spacing, source: Volume, class_thresholds=None) -> LabelMap:
    classes = apply_threshold(probs, t, class_thresholds)
    labels = LabelMap(classes_to_labels(classes, model.organs), spacing)
    if labels.dims != source.dims:
        labels = resample(labels, source.dims)
    return LabelMap(labels.data, source.spacing)


def segment(vol: Volume, model: SegmentationModel, w=None, t=None, class_thresholds=None) -> LabelMap:
    """window_normalize -> resample to net dims -> forward -> threshold -> labels on the source grid."""
    w = model.window if w is None else w
    t = model.threshold if t is None else t
    norm = window_normalize(vol, WindowSpec(float(w)))
    probs = predict_probabilities(model, norm)
    grid_spacing = norm.spacing
    if model.input_dims is not None and tuple(model.input_dims) != vol.dims:
        grid_spacing = tuple(s * n / m for s, n, m in zip(vol.spacing, vol.dims, model.input_dims))
    return labels_from_probabilities(model, probs, t, grid_spacing, vol, class_thresholds)


def locate_and_crop_eye(vol: Volume, model: SegmentationModel, w=None, t=None, eye_label=LEFT_EYE,
                        extent_mm=EYE_CROP_MM):
    """Segment, take the centre of the predicted eye, and crop a fixed mm box around it."""
    labels = segment(vol, model, w, t)
    try:
        center = center_of_mass(labels, eye_label)
    except ValueError:
        raise EmptyPredictionError(
            f"no voxels predicted for organ {eye_label}; fall back to a full-volume crop"
        ) from None
    box = mm_box_around(center, extent_mm, vol.spacing, vol.dims)
    return crop(vol, box), box


def combine_portions(dims, spacing, portions) -> LabelMap:
    """Paste per-portion label maps into one volume; later portions overwrite earlier
    ones where both assign a non-background label.
    """
    out = np.zeros(tuple(dims), dtype=np.uint8)
    for box, labels in portions:
        if not isinstance(box, CropBox):
            box = CropBox(*box)
        if labels.dims != box.shape:
            raise ValueError(f"portion labels {labels.dims} do not match box shape {box.shape}")
        src_lo = [max(a, 0) for a in box.lo]
        src_hi = [min(b, n) for b, n in zip(box.hi, dims)]
        dst = tuple(slice(a, b) for a, b in zip(src_lo, src_hi))
        part = labels.data[tuple(slice(a - l, b - l) for a, b, l in zip(src_lo, src_hi, box.lo))]
        region = out[dst]
        region[part > 0] = part[part > 0]
    return LabelMap(out, spacing)
