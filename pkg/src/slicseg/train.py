"""Seeded training loop: augment, forward, compound loss, backprop, Adam.

Batch size is fixed at 1. Superpixel label maps for the consistency term
are computed on each augmented frame (geometric transforms move the color
boundaries, so pre-augmentation maps would be stale); validation frames
never change, so their maps are computed once and cached by image id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from slicseg import metrics
from slicseg.augment import AugConfig, augment
from slicseg.data import Dataset, pad_to_multiple
from slicseg.imgcore import rgb_to_lab, threshold
from slicseg.loss import LossBreakdown, LossConfig, bce, slic_loss
from slicseg.net import (
    ModelConfig,
    ParamSet,
    adam_step,
    backward,
    forward_with_cache,
    image_to_input,
    init_params,
    predict,
)
from slicseg.slic import SlicParams, segment

LOSS_KINDS = ("bce", "slicloss")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 15
    batch_size: int = 1
    loss: str = "bce"
    loss_config: LossConfig = LossConfig()
    slic_params: SlicParams = SlicParams(k=100, m=40.0)
    seed: int = 0
    augment: AugConfig = AugConfig()

    def __post_init__(self) -> None:
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size != 1:
            raise ValueError(f"batch_size is fixed at 1, got {self.batch_size}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch curves (index 0 = epoch 1) and the 1-based best epoch."""

    train_loss: tuple
    train_bce: tuple
    train_consistency: tuple
    val_loss: tuple
    val_iou: tuple
    val_dice: tuple
    best_epoch: int

    def as_dict(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "train_bce": list(self.train_bce),
            "train_consistency": list(self.train_consistency),
            "val_loss": list(self.val_loss),
            "val_iou": list(self.val_iou),
            "val_dice": list(self.val_dice),
            "best_epoch": self.best_epoch,
        }


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries the partial report of completed epochs."""

    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


@dataclass
class _Curves:
    train_loss: list = field(default_factory=list)
    train_bce: list = field(default_factory=list)
    train_consistency: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_iou: list = field(default_factory=list)
    val_dice: list = field(default_factory=list)

    def report(self, best_epoch: int) -> TrainReport:
        return TrainReport(
            train_loss=tuple(self.train_loss),
            train_bce=tuple(self.train_bce),
            train_consistency=tuple(self.train_consistency),
            val_loss=tuple(self.val_loss),
            val_iou=tuple(self.val_iou),
            val_dice=tuple(self.val_dice),
            best_epoch=best_epoch,
        )


def _loss_and_grad(probs, target, labels, cfg: TrainConfig):
    """(LossBreakdown, d(loss)/d(probs)); labels is called lazily for SLIC."""
    if cfg.loss == "slicloss":
        return slic_loss(probs, target, labels(), cfg.loss_config)
    value, grad = bce(probs, target)
    return LossBreakdown(bce=value, consistency=0.0, total=value, lambda_=0.0), grad


def train(
    train_ds: Dataset,
    val_ds: Dataset,
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
):
    """Train on ``train_ds``, validate per epoch on ``val_ds``.

    Returns ``(params, report)`` where ``params`` is the snapshot from the
    epoch with the highest validation Dice (earliest on ties). All
    randomness — initialization, shuffling, augmentation — derives from
    ``train_cfg.seed``, so a rerun reproduces the report bit for bit.

    Raises :class:`TrainingDiverged` if any loss goes non-finite; the
    exception carries the report of the epochs completed so far.
    """
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig()
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("train and validation splits must both be non-empty")

    params = init_params(model_cfg, train_cfg.seed)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 101]))
    aug_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 202]))
    multiple = 2 ** model_cfg.depth

    curves = _Curves()
    best_dice = -np.inf
    best_epoch = 0
    best_params = params.copy()
    val_label_cache: dict = {}

    for epoch in range(1, train_cfg.epochs + 1):
        train_label_cache: dict = {}
        order = shuffle_rng.permutation(len(train_ds))
        totals, bces, cons = [], [], []
        for idx in order:
            item = train_ds.items[int(idx)]
            image, mask = augment(item.image, item.mask, train_cfg.augment, aug_rng)
            x = pad_to_multiple(image_to_input(image), multiple)
            h, w = mask.shape
            probs_full, cache = forward_with_cache(params, model_cfg, x)
            probs = probs_full[:h, :w]

            def train_labels(image=image, item=item):
                key = (item.id, _transform_key(image))
                if key not in train_label_cache:
                    train_label_cache[key] = segment(rgb_to_lab(image), train_cfg.slic_params)
                return train_label_cache[key]

            breakdown, grad = _loss_and_grad(probs, mask, train_labels, train_cfg)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, image {item.id!r}",
                    curves.report(best_epoch),
                )
            grad_full = np.zeros_like(probs_full)
            grad_full[:h, :w] = grad
            grads = backward(params, model_cfg, x, grad_full, cache)
            adam_step(params, grads, train_cfg.learning_rate)
            totals.append(breakdown.total)
            bces.append(breakdown.bce)
            cons.append(breakdown.consistency)

        curves.train_loss.append(float(np.mean(totals)))
        curves.train_bce.append(float(np.mean(bces)))
        curves.train_consistency.append(float(np.mean(cons)))

        val_totals, val_ious, val_dices = [], [], []
        for item in val_ds:
            probs = predict(params, model_cfg, item.image)

            def val_labels(item=item):
                if item.id not in val_label_cache:
                    val_label_cache[item.id] = segment(
                        rgb_to_lab(item.image), train_cfg.slic_params
                    )
                return val_label_cache[item.id]

            breakdown, _ = _loss_and_grad(probs, item.mask, val_labels, train_cfg)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite validation loss at epoch {epoch}, image {item.id!r}",
                    curves.report(best_epoch),
                )
            pred = threshold(probs, 0.5)
            val_totals.append(breakdown.total)
            val_ious.append(metrics.iou(pred, item.mask))
            val_dices.append(metrics.dice(pred, item.mask))

        curves.val_loss.append(float(np.mean(val_totals)))
        curves.val_iou.append(float(np.mean(val_ious)))
        curves.val_dice.append(float(np.mean(val_dices)))

        if curves.val_dice[-1] > best_dice:
            best_dice = curves.val_dice[-1]
            best_epoch = epoch
            best_params = params.copy()

    return best_params, curves.report(best_epoch)


def _transform_key(image: np.ndarray) -> bytes:
    # Two augmented frames are interchangeable for SLIC purposes exactly
    # when their pixels agree, so the frame content is the cache key.
    return image.tobytes()
