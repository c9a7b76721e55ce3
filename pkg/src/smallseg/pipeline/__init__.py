"""Training, inference, evaluation and sweeps built on the network in ``smallseg.nn``."""
from .boxes import BoundingBox, merge_overlapping_boxes
from .evaluation import SegReport, evaluate, evaluate_cases
from .inference import SegmentationModel, apply_threshold, segment
from .sweep import SweepGrid, SweepReport, sweep
from .training import TrainConfig, is_converged, prepare_samples, train

__all__ = [
    "BoundingBox",
    "SegReport",
    "SegmentationModel",
    "SweepGrid",
    "SweepReport",
    "TrainConfig",
    "apply_threshold",
    "evaluate",
    "evaluate_cases",
    "is_converged",
    "merge_overlapping_boxes",
    "prepare_samples",
    "segment",
    "sweep",
    "train",
]
