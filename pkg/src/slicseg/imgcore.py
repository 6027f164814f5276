"""Image arrays, color conversion, PNG I/O, and mask thresholding.

Conventions used across the package (all arrays are numpy):

* RGB image:   ``(H, W, 3) uint8``
* Lab image:   ``(H, W, 3) float64``; L in [0, 100], a/b nominally [-128, 127]
* binary mask: ``(H, W) uint8`` with values in {0, 1}
* prob mask:   ``(H, W) float64`` with values in [0, 1]

All functions here are pure; none keep internal state.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

# Superpixel seeding and the encoder's pooling both need some room.
MIN_SIDE = 8

# sRGB <-> XYZ (D65 white, 2 degree observer), IEC 61966-2-1 primaries.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
# Row sums are the XYZ of sRGB white; using them (rather than rounded
# published values) makes pure white map to exactly L=100, a=b=0.
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


class PngFormatError(ValueError):
    """File decoded, but is not an 8-bit RGB or grayscale PNG."""


def ensure_rgb(image: np.ndarray) -> np.ndarray:
    """Validate the RGB image convention; returns the input unchanged."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB array, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ValueError(f"expected uint8 RGB data, got dtype {image.dtype}")
    h, w = image.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image is {w}x{h}; minimum supported size is {MIN_SIDE}x{MIN_SIDE}")
    return image


def ensure_bin_mask(mask: np.ndarray) -> np.ndarray:
    """Validate the binary mask convention; returns the input unchanged."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    if not np.issubdtype(mask.dtype, np.integer):
        raise ValueError(f"expected integer mask, got dtype {mask.dtype}")
    bad = (mask != 0) & (mask != 1)
    if bad.any():
        raise ValueError("binary mask contains values outside {0, 1}")
    return mask


def ensure_prob_mask(mask: np.ndarray) -> np.ndarray:
    """Validate the probability mask convention; returns the input unchanged."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) probability mask, got shape {mask.shape}")
    if not np.issubdtype(mask.dtype, np.floating):
        raise ValueError(f"expected float probabilities, got dtype {mask.dtype}")
    if mask.size and (mask.min() < 0.0 or mask.max() > 1.0):
        raise ValueError("probabilities outside [0, 1]")
    return mask


def ensure_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch: {a.shape[:2]} vs {b.shape[:2]}")


def load_png(path) -> np.ndarray:
    """Load an 8-bit RGB or grayscale PNG as an (H, W, 3) uint8 array.

    Grayscale input is replicated across the three channels. Anything
    else (palette, alpha, 16-bit, non-PNG container) raises
    :class:`PngFormatError` naming the offending property; unreadable
    or truncated files raise ``OSError``.
    """
    path = os.fspath(path)
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise PngFormatError(f"{path}: expected PNG, got {img.format}")
            mode = img.mode
            if mode not in ("RGB", "L"):
                prop = {
                    "P": "palette-indexed color",
                    "RGBA": "alpha channel",
                    "LA": "alpha channel",
                    "I": "bit depth 16",
                    "I;16": "bit depth 16",
                    "1": "bit depth 1",
                }.get(mode, f"mode {mode}")
                raise PngFormatError(f"{path}: unsupported PNG ({prop})")
            data = np.asarray(img, dtype=np.uint8)
    except PngFormatError:
        raise
    except Image.UnidentifiedImageError as exc:
        raise PngFormatError(f"{path}: not a recognizable image file") from exc
    except OSError as exc:
        raise OSError(f"{path}: failed to read PNG ({exc})") from exc
    if data.ndim == 2:
        data = np.repeat(data[:, :, None], 3, axis=2)
    return ensure_rgb(data)


def load_mask_png(path) -> np.ndarray:
    """Load a mask PNG as a (H, W) uint8 {0, 1} array (value >= 128 is foreground)."""
    rgb = load_png(path)
    return (rgb[:, :, 0] >= 128).astype(np.uint8)


def load_prob_png(path) -> np.ndarray:
    """Load a grayscale PNG as a (H, W) float64 probability map in [0, 1].

    Pixel value v maps to v/255, so a binary {0, 255} mask loads as
    exact {0.0, 1.0} probabilities.
    """
    rgb = load_png(path)
    return rgb[:, :, 0].astype(np.float64) / 255.0


def save_png(image: np.ndarray, path) -> None:
    """Save an RGB image, binary mask, or probability mask as PNG.

    Dispatch is by shape/dtype: (H, W, 3) uint8 is written as RGB;
    a {0, 1} integer mask as grayscale {0, 255}; a float probability
    mask as grayscale round(p * 255), round half up.
    """
    path = os.fspath(path)
    image = np.asarray(image)
    if image.ndim == 3:
        data = ensure_rgb(image)
        mode = "RGB"
    elif image.ndim == 2 and np.issubdtype(image.dtype, np.floating):
        probs = ensure_prob_mask(image)
        data = np.floor(probs * 255.0 + 0.5).astype(np.uint8)
        mode = "L"
    elif image.ndim == 2:
        mask = ensure_bin_mask(image)
        data = (mask * 255).astype(np.uint8)
        mode = "L"
    else:
        raise ValueError(f"cannot save array of shape {image.shape} as PNG")
    try:
        Image.fromarray(data, mode=mode).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"{path}: failed to write PNG ({exc})") from exc


def _lab_f(t: np.ndarray) -> np.ndarray:
    cube = _DELTA**3
    return np.where(t > cube, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert an (H, W, 3) uint8 sRGB image to CIELAB (D65), float64.

    Pipeline: sRGB gamma expansion -> linear RGB -> XYZ -> L*a*b*.
    """
    image = ensure_rgb(image)
    srgb = image.astype(np.float64) / 255.0
    linear = np.where(srgb > 0.04045, ((srgb + 0.055) / 1.055) ** 2.4, srgb / 12.92)
    xyz = linear @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    lab = np.empty_like(xyz)
    lab[:, :, 0] = 116.0 * f[:, :, 1] - 16.0
    lab[:, :, 1] = 500.0 * (f[:, :, 0] - f[:, :, 1])
    lab[:, :, 2] = 200.0 * (f[:, :, 1] - f[:, :, 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Convert (H, W, 3) CIELAB values back to uint8 sRGB, clipping to gamut."""
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) Lab array, got shape {lab.shape}")
    fy = (lab[:, :, 0] + 16.0) / 116.0
    fx = fy + lab[:, :, 1] / 500.0
    fz = fy - lab[:, :, 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=2) * _WHITE
    linear = xyz @ _XYZ_TO_RGB.T
    linear = np.clip(linear, 0.0, 1.0)
    srgb = np.where(linear > 0.0031308, 1.055 * linear ** (1.0 / 2.4) - 0.055, 12.92 * linear)
    return np.floor(srgb * 255.0 + 0.5).astype(np.uint8)


def threshold(mask: np.ndarray, t: float) -> np.ndarray:
    """Binarize a probability mask: output is 1 where ``mask >= t``.

    The comparison is inclusive, so raising ``t`` never turns a 0 into a 1.
    """
    mask = ensure_prob_mask(mask)
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    return (mask >= t).astype(np.uint8)
