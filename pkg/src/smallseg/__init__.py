"""Segmentation of small organs in 3-D CT: intensity windowing, a 3-D
encoder-decoder network, Dice / Hausdorff scoring, and window x threshold sweeps.
"""
from .metrics import dice, dose_stats, hausdorff
from .nn.kernels import BACKEND
from .volume import CropBox, LabelMap, Volume, WindowSpec, crop, rotate, window_normalize

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CropBox",
    "LabelMap",
    "Volume",
    "WindowSpec",
    "crop",
    "dice",
    "dose_stats",
    "hausdorff",
    "rotate",
    "window_normalize",
]
