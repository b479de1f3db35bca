"""Segmentation metrics, generalized dice loss and the poly learning-rate schedule.

Metric values are percentages. Classes that never occur in the ground truth
(t_i == 0) are left out of every per-class mean.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .. import config
from .errors import DomainError, ParameterError, ShapeError


@dataclass(frozen=True)
class SegConfusion:
    counts: np.ndarray  # (K, K): rows true class, cols predicted class

    @classmethod
    def empty(cls, num_classes: int = config.NUM_CLASSES) -> "SegConfusion":
        if num_classes < 1:
            raise ParameterError(f"num_classes must be >= 1, got {num_classes}")
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "SegConfusion") -> "SegConfusion":
        if other.counts.shape != self.counts.shape:
            raise ShapeError(f"cannot merge {self.counts.shape} and {other.counts.shape} confusions")
        return SegConfusion(self.counts + other.counts)


def accumulate(conf: SegConfusion, truth, pred) -> SegConfusion:
    """Return ``conf`` plus the pixel counts of one (truth, prediction) label-mask pair."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth {truth.shape} and prediction {pred.shape} differ")
    k = conf.num_classes
    for name, labels in (("truth", truth), ("prediction", pred)):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ParameterError(f"{name} labels must lie in [0, {k})")
    counts = np.bincount(truth.reshape(-1) * k + pred.reshape(-1), minlength=k * k)
    return SegConfusion(conf.counts + counts.reshape(k, k))


def _parts(conf: SegConfusion):
    if conf.total == 0:
        raise DomainError("metrics of an empty confusion matrix")
    n = conf.counts.astype(np.float64)
    diag = np.diag(n)
    t = n.sum(axis=1)
    union = t + n.sum(axis=0) - diag
    present = t > 0
    return diag, t, union, present


def pixel_acc(conf: SegConfusion) -> float:
    diag, t, _, _ = _parts(conf)
    return 100.0 * diag.sum() / t.sum()


def mean_pixel_acc(conf: SegConfusion) -> float:
    diag, t, _, present = _parts(conf)
    return 100.0 * float(np.mean(diag[present] / t[present]))


def class_iou(conf: SegConfusion) -> np.ndarray:
    """Per-class IoU as fractions; NaN for classes absent from the ground truth."""
    diag, _, union, present = _parts(conf)
    iou = np.full(conf.num_classes, np.nan)
    iou[present] = diag[present] / union[present]
    return iou


def mean_iou(conf: SegConfusion) -> float:
    iou = class_iou(conf)
    return 100.0 * float(np.nanmean(iou))


def fw_iou(conf: SegConfusion) -> float:
    diag, t, union, present = _parts(conf)
    return 100.0 * float((t[present] * diag[present] / union[present]).sum() / t.sum())


def metric_report(conf: SegConfusion) -> Dict[str, object]:
    iou = class_iou(conf)
    return {
        "pixel_acc": pixel_acc(conf),
        "mean_pixel_acc": mean_pixel_acc(conf),
        "mean_iou": mean_iou(conf),
        "fw_iou": fw_iou(conf),
        "class_iou": [None if np.isnan(v) else 100.0 * float(v) for v in iou],
        "pixels": conf.total,
    }


def generalized_dice_loss(prob, truth_onehot, weights: Optional[np.ndarray] = None) -> float:
    """
    Generalized dice loss of a probability map against a one-hot ground truth

    Class weights default to 1 / (class pixel count)^2; classes absent from the
    ground truth get weight 0.
    """
    s = np.asarray(prob, dtype=np.float64)
    g = np.asarray(truth_onehot, dtype=np.float64)
    if s.shape != g.shape or s.ndim < 2:
        raise ShapeError(f"prob {s.shape} and truth {g.shape} must match")
    if not np.isin(g, (0.0, 1.0)).all() or not np.all(g.sum(axis=-1) == 1.0):
        raise DomainError("truth must be one-hot along the last axis")
    g = g.reshape(-1, g.shape[-1])
    s = s.reshape(-1, s.shape[-1])
    support = g.sum(axis=0)
    if weights is None:
        weights = np.where(support > 0, 1.0 / np.where(support > 0, support, 1.0) ** 2, 0.0)
    numerator = (weights * (g * s).sum(axis=0)).sum()
    denominator = (weights * (g + s).sum(axis=0)).sum()
    return float(1.0 - 2.0 * numerator / denominator)


def poly_lr(base: float = config.BASE_LR, iteration: int = 0, total: int = 1,
            power: float = config.POLY_POWER) -> float:
    """base * (1 - iteration / total) ** power"""
    if total < 1:
        raise ParameterError(f"total iterations must be >= 1, got {total}")
    if not 0 <= iteration <= total:
        raise ParameterError(f"iteration {iteration} outside [0, {total}]")
    return base * (1.0 - iteration / total) ** power
