"""Superpixel-regularized binary segmentation: SLIC, compound loss, tiny U-Net."""

from slicseg.imgcore import (
    MIN_SIDE,
    PngFormatError,
    lab_to_rgb,
    load_mask_png,
    load_png,
    load_prob_png,
    rgb_to_lab,
    save_png,
    threshold,
)

__version__ = "0.1.0"

__all__ = [
    "MIN_SIDE",
    "PngFormatError",
    "lab_to_rgb",
    "load_mask_png",
    "load_png",
    "load_prob_png",
    "rgb_to_lab",
    "save_png",
    "threshold",
    "__version__",
]
