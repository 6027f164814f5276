"""Random affine augmentation applied jointly to an image and its mask.

One transform is sampled per call: horizontal mirroring (probability
0.5 when enabled), rotation, x/y shift, shear, and zoom, each drawn
uniformly within strengths given as fractions. The strengths follow
the training protocol this package reproduces: rotation fraction 0.20
of a half turn (so up to 36 degrees), everything else 0.05 of its
natural unit (image size for shifts, radians for shear, scale 1 for
zoom).

The image is resampled bilinearly, the mask nearest-neighbor, both
with reflected borders, and both under the same transform so the pair
stays aligned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from slicseg import imgcore


@dataclass(frozen=True)
class AugConfig:
    """Transform strengths; each fraction must lie in [0, 1)."""

    hflip: bool = True
    rotation_frac: float = 0.20
    shift_frac: float = 0.05
    shear_frac: float = 0.05
    zoom_frac: float = 0.05

    def __post_init__(self) -> None:
        for name in ("rotation_frac", "shift_frac", "shear_frac", "zoom_frac"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value!r}")


@dataclass(frozen=True)
class AffineSample:
    """One concrete draw: mirror flag, angle/shear in radians, pixel shift, scale."""

    flip: bool
    angle: float
    shift_x: float
    shift_y: float
    shear: float
    zoom: float

    @classmethod
    def identity(cls) -> "AffineSample":
        return cls(flip=False, angle=0.0, shift_x=0.0, shift_y=0.0, shear=0.0, zoom=1.0)


def sample_transform(cfg: AugConfig, rng: np.random.Generator, shape) -> AffineSample:
    """Draw one transform; the draw order is fixed for reproducibility."""
    h, w = shape[:2]
    flip = bool(cfg.hflip and rng.random() < 0.5)
    angle = rng.uniform(-1.0, 1.0) * cfg.rotation_frac * np.pi
    shift_x = rng.uniform(-1.0, 1.0) * cfg.shift_frac * w
    shift_y = rng.uniform(-1.0, 1.0) * cfg.shift_frac * h
    shear = rng.uniform(-1.0, 1.0) * cfg.shear_frac
    zoom = 1.0 + rng.uniform(-1.0, 1.0) * cfg.zoom_frac
    return AffineSample(flip, angle, shift_x, shift_y, shear, zoom)


def _matrix(sample: AffineSample) -> np.ndarray:
    flip = np.array([[-1.0, 0.0], [0.0, 1.0]]) if sample.flip else np.eye(2)
    cos, sin = np.cos(sample.angle), np.sin(sample.angle)
    rotate = np.array([[cos, -sin], [sin, cos]])
    shear = np.array([[1.0, np.tan(sample.shear)], [0.0, 1.0]])
    zoom = sample.zoom * np.eye(2)
    return zoom @ shear @ rotate @ flip


def apply_transform(image: np.ndarray, mask: np.ndarray, sample: AffineSample):
    """Resample an (image, mask) pair under one concrete transform.

    Coordinates map through the inverse transform about the image
    center, so the operation reads: flip, rotate, shear, zoom, then
    shift, in output-image terms.
    """
    image = imgcore.ensure_rgb(image)
    mask = imgcore.ensure_bin_mask(mask)
    imgcore.ensure_same_shape(image, mask)
    h, w = image.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    inverse = np.linalg.inv(_matrix(sample))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    px = xs - cx - sample.shift_x
    py = ys - cy - sample.shift_y
    src_x = inverse[0, 0] * px + inverse[0, 1] * py + cx
    src_y = inverse[1, 0] * px + inverse[1, 1] * py + cy

    channels = [
        map_coordinates(image[:, :, c].astype(np.float64), [src_y, src_x], order=1, mode="reflect")
        for c in range(3)
    ]
    out_image = np.floor(np.stack(channels, axis=2) + 0.5).astype(np.uint8)
    out_mask = map_coordinates(mask, [src_y, src_x], order=0, mode="reflect")
    return out_image, out_mask.astype(np.uint8)


def augment(image: np.ndarray, mask: np.ndarray, cfg: AugConfig, rng: np.random.Generator):
    """Sample one transform from ``cfg`` and apply it to the pair."""
    sample = sample_transform(cfg, rng, image.shape)
    return apply_transform(image, mask, sample)
