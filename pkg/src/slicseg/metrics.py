"""Segmentation quality metrics (IoU, Dice) and dataset-level aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slicseg import imgcore, net
from slicseg.data import Dataset


def _validated_pair(pred: np.ndarray, gt: np.ndarray):
    imgcore.ensure_bin_mask(pred)
    imgcore.ensure_bin_mask(gt)
    imgcore.ensure_same_shape(pred, gt)
    return pred.astype(bool), gt.astype(bool)


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of foreground; both-empty counts as 1.0."""
    p, g = _validated_pair(pred, gt)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """Dice coefficient 2|p∩g| / (|p|+|g|); both-empty counts as 1.0."""
    p, g = _validated_pair(pred, gt)
    total = np.count_nonzero(p) + np.count_nonzero(g)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & g) / total


@dataclass(frozen=True)
class EvalResult:
    per_image: tuple  # of (id, iou, dice)
    mean_iou: float
    mean_dice: float
    n: int

    def as_dict(self) -> dict:
        return {
            "per_image": [
                {"id": item_id, "iou": i, "dice": d} for item_id, i, d in self.per_image
            ],
            "mean_iou": self.mean_iou,
            "mean_dice": self.mean_dice,
            "n": self.n,
        }


def evaluate(
    params: net.ParamSet,
    cfg: net.ModelConfig,
    dataset: Dataset,
    threshold: float = 0.5,
) -> EvalResult:
    """Forward every image, threshold, and aggregate per-image IoU/Dice."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    rows = []
    for item in dataset:
        probs = net.predict(params, cfg, item.image)
        pred = imgcore.threshold(probs, threshold)
        rows.append((item.id, iou(pred, item.mask), dice(pred, item.mask)))
    return EvalResult(
        per_image=tuple(rows),
        mean_iou=float(np.mean([r[1] for r in rows])),
        mean_dice=float(np.mean([r[2] for r in rows])),
        n=len(rows),
    )
