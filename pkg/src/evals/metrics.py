"""
Evaluation Metrics for pseudo-label quality

Implements the standard semantic segmentation protocol:
1. Confusion matrix accumulation (row = ground truth, column = prediction)
2. Per-class IoU and mIoU (classes with zero union are left out of the mean)
3. Pixel accuracy and mean class accuracy
"""

import json
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from src.exceptions import LabelRangeError, UndefinedMetricError, require_same_dims
from src.storage.models import LabelMap


class ConfusionMatrix:
    """C x C pixel counts; additive across images and workers"""

    def __init__(self, num_classes: int, ignore_label: int = 255):
        self.num_classes = num_classes
        self.ignore_label = ignore_label
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, gt: LabelMap, pred: LabelMap) -> "ConfusionMatrix":
        """
        Add one (ground truth, prediction) pair

        Pixels whose ground truth is the ignore label are skipped entirely.

        Example:
            >>> cm = ConfusionMatrix(3)
            >>> cm.accumulate(gt, pred)   # gt = pred = 4 px of class 2
            >>> cm.counts[2, 2]
            4
        """
        require_same_dims(gt.labels.shape, pred.labels.shape, what="ground truth and prediction")
        valid = gt.labels != self.ignore_label
        g = gt.labels[valid].astype(np.int64)
        p = pred.labels[valid].astype(np.int64)
        if g.size and g.max() >= self.num_classes:
            raise LabelRangeError(f"ground-truth label {int(g.max())} >= num_classes {self.num_classes}")
        if p.size and p.max() >= self.num_classes:
            raise LabelRangeError(f"predicted label {int(p.max())} >= num_classes {self.num_classes}")
        index = self.num_classes * g + p
        self.counts += np.bincount(index, minlength=self.num_classes ** 2).reshape(
            self.num_classes, self.num_classes
        )
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise LabelRangeError(
                f"cannot merge confusion matrices over {self.num_classes} and {other.num_classes} classes"
            )
        merged = ConfusionMatrix(self.num_classes, self.ignore_label)
        merged.counts = self.counts + other.counts
        return merged

    __add__ = merge

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def reset(self) -> None:
        self.counts[:] = 0


def iou_per_class(cm: ConfusionMatrix) -> List[Optional[float]]:
    """
    IoU_c = TP / (TP + FP + FN); None for classes that never appear in
    ground truth or prediction
    """
    tp = np.diag(cm.counts)
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - tp
    return [int(t) / int(u) if u > 0 else None for t, u in zip(tp, union)]


def miou(cm: ConfusionMatrix) -> float:
    """Mean of the defined per-class IoUs"""
    defined = [v for v in iou_per_class(cm) if v is not None]
    if not defined:
        raise UndefinedMetricError("mIoU is undefined: no class appears in ground truth or prediction")
    return sum(defined) / len(defined)


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("pixel accuracy is undefined: no evaluated pixels")
    return int(np.trace(cm.counts)) / cm.total


def mean_class_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over the classes present in ground truth"""
    per_class = cm.counts.sum(axis=1)
    present = np.flatnonzero(per_class)
    if present.size == 0:
        raise UndefinedMetricError("class accuracy is undefined: no evaluated pixels")
    recalls = [int(cm.counts[c, c]) / int(per_class[c]) for c in present]
    return sum(recalls) / len(recalls)


class IoUReport(BaseModel):
    num_classes: int
    per_class_iou: List[Optional[float]]
    miou: float
    pixel_accuracy: float
    mean_class_accuracy: float
    evaluated_pixels: int

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def calculate_all_metrics(cm: ConfusionMatrix) -> IoUReport:
    """All confusion-matrix metrics at once"""
    return IoUReport(
        num_classes=cm.num_classes,
        per_class_iou=iou_per_class(cm),
        miou=miou(cm),
        pixel_accuracy=pixel_accuracy(cm),
        mean_class_accuracy=mean_class_accuracy(cm),
        evaluated_pixels=cm.total,
    )


def evaluate_pairs(pairs, num_classes: int, ignore_label: int = 255) -> IoUReport:
    """Accumulate several (gt, pred) pairs into one report"""
    cm = ConfusionMatrix(num_classes, ignore_label)
    for gt, pred in pairs:
        cm.accumulate(gt, pred)
    return calculate_all_metrics(cm)

