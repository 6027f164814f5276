"""Dataset loading, deterministic splits, and a two-modality synthetic generator.

The generator produces paired source/target datasets whose lesion
geometry is identical pixel for pixel while the imaging differs, as a
desk-scale stand-in for a change of endoscopic modality. The gap has
two parts: a chroma cast flip (warm source vs cool target, with the
lesion/background contrast carried by luminance so the class signal is
shared) and spatially correlated blotch noise in both modalities —
mild in the source, strong in the target — emulating acquisition noise
that worsens on the dimmer optical path of the second modality. The
blotches are drawn at a scale well below typical superpixel spacing,
so per-pixel color evidence degrades while region-pooled evidence
survives. Geometry being shared, photometric shift is the only
variable in generalization experiments.

On-disk layout for every dataset: ``<root>/images/*.png`` and
``<root>/masks/*.png`` matched by filename stem, with an optional
``manifest.json`` alongside.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from slicseg import imgcore


@dataclass(frozen=True)
class DataItem:
    image: np.ndarray
    mask: np.ndarray
    id: str
    modality: str


@dataclass(frozen=True)
class Dataset:
    items: tuple

    def __post_init__(self) -> None:
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        seen = set()
        for item in items:
            imgcore.ensure_rgb(item.image)
            imgcore.ensure_bin_mask(item.mask)
            imgcore.ensure_same_shape(item.image, item.mask)
            if item.id in seen:
                raise ValueError(f"duplicate item id {item.id!r}")
            seen.add(item.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def ids(self) -> list:
        return [item.id for item in self.items]


def load_dataset(image_dir, mask_dir, modality: str) -> Dataset:
    """Load image/mask pairs matched by stem; masks binarize at 128.

    Problems are aggregated into one error so a bad directory reports
    every missing mask and dimension mismatch at once.
    """
    image_dir = os.fspath(image_dir)
    mask_dir = os.fspath(mask_dir)
    stems = sorted(
        os.path.splitext(name)[0]
        for name in os.listdir(image_dir)
        if name.endswith(".png")
    )
    problems = []
    items = []
    for stem in stems:
        mask_path = os.path.join(mask_dir, stem + ".png")
        if not os.path.exists(mask_path):
            problems.append(f"{stem}: no mask file")
            continue
        image = imgcore.load_png(os.path.join(image_dir, stem + ".png"))
        mask = imgcore.load_mask_png(mask_path)
        if image.shape[:2] != mask.shape:
            problems.append(
                f"{stem}: image is {image.shape[1]}x{image.shape[0]}, "
                f"mask is {mask.shape[1]}x{mask.shape[0]}"
            )
            continue
        items.append(DataItem(image=image, mask=mask, id=stem, modality=modality))
    if problems:
        raise ValueError("dataset problems: " + "; ".join(problems))
    return Dataset(tuple(items))


def write_dataset(dataset: Dataset, root, manifest: dict | None = None) -> None:
    """Write the standard directory layout; optionally a manifest.json."""
    root = os.fspath(root)
    image_dir = os.path.join(root, "images")
    mask_dir = os.path.join(root, "masks")
    os.makedirs(image_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    for item in dataset:
        imgcore.save_png(item.image, os.path.join(image_dir, item.id + ".png"))
        imgcore.save_png(item.mask, os.path.join(mask_dir, item.id + ".png"))
    if manifest is not None:
        with open(os.path.join(root, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def split(dataset: Dataset, train_frac: float, seed: int):
    """Seeded shuffle, then partition at round(train_frac * n).

    Both parts come back sorted by id; an empty part is an error.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = int(np.floor(train_frac * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"split of {n} items at train_frac={train_frac} leaves an empty part"
        )
    order = np.random.default_rng(seed).permutation(n)
    train_items = sorted((dataset.items[i] for i in order[:n_train]), key=lambda it: it.id)
    val_items = sorted((dataset.items[i] for i in order[n_train:]), key=lambda it: it.id)
    return Dataset(tuple(train_items)), Dataset(tuple(val_items))


def pad_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Reflect-pad the trailing spatial dims up to the next multiple."""
    h, w = image.shape[-2], image.shape[-1]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image
    pad = [(0, 0)] * (image.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(image, pad, mode="reflect")


# --- synthetic two-modality generator --------------------------------------


@dataclass(frozen=True)
class Palette:
    """Lab colors for lesion and background plus a per-image jitter range."""

    lesion: tuple
    background: tuple
    jitter: tuple = (6.0, 4.0, 4.0)

    def __post_init__(self) -> None:
        gap = np.linalg.norm(np.subtract(self.lesion, self.background))
        if gap < 15.0:
            raise ValueError(
                f"lesion/background Lab distance {gap:.1f} < 15; not segmentable by construction"
            )


# Warm (red-brown) source vs cool (green-blue) target. The lesion is
# substantially darker than its surroundings in both palettes — the
# luminance contrast is the class signal and it is shared across
# modalities — while chroma is identical for the two classes within a
# modality and flips sign between modalities, so color marks the domain
# but never the class.
SOURCE_PALETTE = Palette(lesion=(38.0, 24.0, 12.0), background=(73.0, 24.0, 12.0))
TARGET_PALETTE = Palette(lesion=(38.0, -16.0, -10.0), background=(73.0, -16.0, -10.0))


@dataclass(frozen=True)
class SynthConfig:
    count: int = 20
    size: tuple = (128, 128)
    blob_count_range: tuple = (2, 5)
    blob_smoothness: float = 4.0
    source_palette: Palette = field(default_factory=lambda: SOURCE_PALETTE)
    target_palette: Palette = field(default_factory=lambda: TARGET_PALETTE)
    noise_sigma: float = 3.0
    source_blotch_sigma: float = 4.0
    target_blotch_sigma: float = 12.0
    blotch_scale: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        h, w = self.size
        if h % 4 or w % 4 or h < imgcore.MIN_SIDE or w < imgcore.MIN_SIDE:
            raise ValueError(f"size must be divisible by 4 and >= {imgcore.MIN_SIDE}, got {self.size}")
        lo, hi = self.blob_count_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid blob_count_range {self.blob_count_range}")
        if not self.blob_smoothness > 0:
            raise ValueError(f"blob_smoothness must be positive, got {self.blob_smoothness}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.source_blotch_sigma < 0:
            raise ValueError(
                f"source_blotch_sigma must be non-negative, got {self.source_blotch_sigma}"
            )
        if self.target_blotch_sigma < 0:
            raise ValueError(
                f"target_blotch_sigma must be non-negative, got {self.target_blotch_sigma}"
            )
        if not self.blotch_scale > 0:
            raise ValueError(f"blotch_scale must be positive, got {self.blotch_scale}")


def _sample_mask(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Thresholded low-frequency noise: a few smooth blobs of target area."""
    h, w = cfg.size
    for _ in range(10):
        blobs = int(rng.integers(cfg.blob_count_range[0], cfg.blob_count_range[1] + 1))
        grid = blobs + 2
        coarse = rng.normal(size=(grid, grid))
        fraction = rng.uniform(0.08, 0.35)
        fine = zoom(coarse, (h / grid, w / grid), order=3, mode="grid-mirror", grid_mode=True)
        fine = gaussian_filter(fine, sigma=cfg.blob_smoothness)
        mask = (fine > np.quantile(fine, 1.0 - fraction)).astype(np.uint8)
        if 0.01 <= mask.mean() <= 0.6:
            return mask
    raise RuntimeError("mask generation failed 10 times; check blob configuration")


def _unit_blotch_std(scale: float, truncate: float = 4.0) -> float:
    """Std of white noise after 2-D Gaussian smoothing at ``scale``.

    The separable filter maps unit-variance noise to variance
    ``(sum k^2)^2`` where ``k`` is the normalized 1-D kernel, so the
    std is ``sum(k^2)``. Used to rescale blotch fields to a requested
    Lab-unit amplitude independent of the correlation scale.
    """
    radius = int(truncate * scale + 0.5)
    x = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-0.5 * (x / scale) ** 2)
    kernel /= kernel.sum()
    return float(np.sum(kernel**2))


def _blotch_field(shape: tuple, sigma: float, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Per-channel correlated Gaussian field with std ``sigma`` in Lab units."""
    gain = sigma / _unit_blotch_std(scale)
    layers = [gaussian_filter(rng.normal(size=shape), sigma=scale) for _ in range(3)]
    return np.stack(layers, axis=2) * gain


def _paint(
    mask: np.ndarray,
    palette: Palette,
    noise_sigma: float,
    rng: np.random.Generator,
    blotch_sigma: float = 0.0,
    blotch_scale: float = 3.0,
) -> np.ndarray:
    cast = rng.uniform(-1.0, 1.0, size=3) * np.asarray(palette.jitter)
    lesion = np.asarray(palette.lesion) + cast
    background = np.asarray(palette.background) + cast
    lab = np.where(mask[:, :, None] == 1, lesion, background)
    lab = lab + rng.normal(size=lab.shape) * noise_sigma
    if blotch_sigma > 0:
        lab = lab + _blotch_field(mask.shape, blotch_sigma, blotch_scale, rng)
    return imgcore.lab_to_rgb(lab)


def synth_generate(cfg: SynthConfig):
    """Generate (source, target) datasets with shared masks, shifted imaging."""
    source_items = []
    target_items = []
    for i in range(cfg.count):
        mask_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i, 0]))
        mask = _sample_mask(cfg, mask_rng)
        item_id = f"img_{i:04d}"
        source_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i, 1]))
        target_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i, 2]))
        source_items.append(
            DataItem(
                _paint(
                    mask,
                    cfg.source_palette,
                    cfg.noise_sigma,
                    source_rng,
                    blotch_sigma=cfg.source_blotch_sigma,
                    blotch_scale=cfg.blotch_scale,
                ),
                mask,
                item_id,
                "source",
            )
        )
        target_items.append(
            DataItem(
                _paint(
                    mask,
                    cfg.target_palette,
                    cfg.noise_sigma,
                    target_rng,
                    blotch_sigma=cfg.target_blotch_sigma,
                    blotch_scale=cfg.blotch_scale,
                ),
                mask,
                item_id,
                "target",
            )
        )
    return Dataset(tuple(source_items)), Dataset(tuple(target_items))


def synth_manifest(cfg: SynthConfig, dataset: Dataset) -> dict:
    return {
        "seed": cfg.seed,
        "config": asdict(cfg),
        "foreground_fraction": {item.id: float(item.mask.mean()) for item in dataset},
    }
