"""Superpixel-consistency measure and the compound segmentation loss.

The consistency measure scores a prediction by how uniformly it fills
each superpixel: a segment is consistent when its dominant class covers
at least a fraction ``tau`` of its pixels. The compound loss averages
binary cross-entropy with a consistency penalty:

    total = (bce + lambda * consistency) / (1 + lambda)

Two consistency variants exist. The hard one counts thresholded pixels
and is used for reporting and model selection. Because that count has
zero gradient almost everywhere, training uses a soft relaxation: the
occupancy of a segment is taken from its mean probability, and the
penalty ramps linearly from 0 (occupancy >= tau) to 1 (occupancy <=
soft_ramp_low). How the original method propagated gradients through
the consistency term is not documented; the ramp relaxation is this
implementation's choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slicseg import imgcore
from slicseg.slic import SuperpixelLabelMap

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """Weights for the compound loss: mixing factor, occupancy threshold, ramp foot."""

    lambda_: float = 0.75
    tau: float = 0.8
    soft_ramp_low: float = 0.5

    def __post_init__(self) -> None:
        if not self.lambda_ >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lambda_!r}")
        if not 0.5 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0.5, 1], got {self.tau!r}")
        if not 0.0 <= self.soft_ramp_low < self.tau:
            raise ValueError(
                f"soft_ramp_low must lie in [0, tau), got {self.soft_ramp_low!r} with tau {self.tau!r}"
            )


@dataclass(frozen=True)
class ConsistencyReport:
    """Hard consistency outcome over one (label map, mask) pair."""

    num_segments: int
    consistent_fraction: float
    penalty: float
    per_segment_occupancy: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    """Component and combined values of one loss evaluation."""

    bce: float
    consistency: float
    total: float
    lambda_: float

    def __post_init__(self) -> None:
        if self.bce < 0:
            raise ValueError(f"bce must be non-negative, got {self.bce}")
        if not 0.0 <= self.consistency <= 1.0:
            raise ValueError(f"consistency must lie in [0, 1], got {self.consistency}")
        expected = (self.bce + self.lambda_ * self.consistency) / (1.0 + self.lambda_)
        if abs(self.total - expected) > 1e-12 * max(1.0, abs(expected)):
            raise ValueError(f"total {self.total} does not combine bce and consistency")

    def as_dict(self) -> dict:
        return {
            "bce": self.bce,
            "consistency": self.consistency,
            "total": self.total,
            "lambda": self.lambda_,
        }


def _check_dims(label_map: SuperpixelLabelMap, mask: np.ndarray) -> None:
    if mask.shape != label_map.labels.shape:
        raise ValueError(
            f"dimension mismatch: mask {mask.shape} vs labels {label_map.labels.shape}"
        )


def _segment_means(label_map: SuperpixelLabelMap, values: np.ndarray):
    flat = label_map.labels.ravel()
    counts = np.bincount(flat, minlength=label_map.num_segments)
    sums = np.bincount(flat, weights=values.ravel(), minlength=label_map.num_segments)
    return sums / counts, counts


def hard_consistency(label_map: SuperpixelLabelMap, mask: np.ndarray, tau: float) -> ConsistencyReport:
    """Count segments whose dominant class occupies at least ``tau`` of their area.

    Occupancy of segment j is ``max(f_j, 1 - f_j)`` with ``f_j`` its
    foreground fraction, so an all-background segment is just as
    consistent as an all-foreground one.
    """
    if not 0.5 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0.5, 1], got {tau!r}")
    mask = imgcore.ensure_bin_mask(mask)
    _check_dims(label_map, mask)
    fractions, _ = _segment_means(label_map, mask.astype(np.float64))
    occupancy = np.maximum(fractions, 1.0 - fractions)
    fraction = float((occupancy >= tau).sum() / label_map.num_segments)
    return ConsistencyReport(
        num_segments=label_map.num_segments,
        consistent_fraction=fraction,
        penalty=1.0 - fraction,
        per_segment_occupancy=occupancy,
    )


def soft_consistency(label_map: SuperpixelLabelMap, probs: np.ndarray, cfg: LossConfig):
    """Differentiable consistency penalty with its per-pixel gradient.

    Segment occupancy is relaxed to ``max(mean_p, 1 - mean_p)`` and the
    per-segment penalty ramps linearly: 0 at occupancy tau, 1 at
    soft_ramp_low. Kinks (saturated ramp, mean probability exactly 0.5)
    take subgradient 0.
    """
    probs = imgcore.ensure_prob_mask(probs)
    _check_dims(label_map, probs)
    pbar, counts = _segment_means(label_map, probs)
    ohat = np.maximum(pbar, 1.0 - pbar)
    width = cfg.tau - cfg.soft_ramp_low
    c = np.clip((cfg.tau - ohat) / width, 0.0, 1.0)
    value = float(c.mean())

    inside = (ohat > cfg.soft_ramp_low) & (ohat < cfg.tau)
    slope = np.where(inside, -1.0 / width, 0.0) * np.sign(pbar - 0.5)
    per_pixel = slope / (label_map.num_segments * counts)
    grad = per_pixel[label_map.labels]
    return value, grad


def bce(probs: np.ndarray, target: np.ndarray):
    """Mean binary cross-entropy and its per-pixel gradient.

    Probabilities are clamped to [eps, 1 - eps] before the logs; the
    gradient is zero wherever the clamp is active.
    """
    probs = imgcore.ensure_prob_mask(probs)
    target = imgcore.ensure_bin_mask(target)
    if probs.shape != target.shape:
        raise ValueError(f"dimension mismatch: probs {probs.shape} vs target {target.shape}")
    n = probs.size
    y = target.astype(np.float64)
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    value = float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean())
    grad = -(y / p - (1.0 - y) / (1.0 - p)) / n
    grad[(probs < BCE_EPS) | (probs > 1.0 - BCE_EPS)] = 0.0
    return value, grad


def slic_loss(probs: np.ndarray, target: np.ndarray, label_map: SuperpixelLabelMap, cfg: LossConfig):
    """Compound training loss: (bce + lambda * soft consistency) / (1 + lambda).

    Returns the breakdown and the per-pixel gradient of the total, which
    is the same affine combination of the component gradients.
    """
    bce_value, bce_grad = bce(probs, target)
    con_value, con_grad = soft_consistency(label_map, probs, cfg)
    denom = 1.0 + cfg.lambda_
    total = (bce_value + cfg.lambda_ * con_value) / denom
    grad = (bce_grad + cfg.lambda_ * con_grad) / denom
    return LossBreakdown(bce_value, con_value, total, cfg.lambda_), grad


def hard_slic_loss(
    probs: np.ndarray,
    target: np.ndarray,
    label_map: SuperpixelLabelMap,
    cfg: LossConfig,
    t: float,
) -> LossBreakdown:
    """Reporting variant: consistency of the prediction thresholded at ``t``.

    No gradient; used for logging and grid-search scoring.
    """
    bce_value, _ = bce(probs, target)
    hard_mask = imgcore.threshold(probs, t)
    penalty = hard_consistency(label_map, hard_mask, cfg.tau).penalty
    total = (bce_value + cfg.lambda_ * penalty) / (1.0 + cfg.lambda_)
    return LossBreakdown(bce_value, penalty, total, cfg.lambda_)
