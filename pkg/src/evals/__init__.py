"""
Evaluation Framework for pseudo labels

This module provides tools to measure:
- Per-class IoU, mIoU and pixel accuracy from a confusion matrix
- Pseudo-map quality against ground truth and against the raw TA prediction
"""

from .metrics import (
    ConfusionMatrix,
    IoUReport,
    calculate_all_metrics,
    evaluate_pairs,
    iou_per_class,
    mean_class_accuracy,
    miou,
    pixel_accuracy,
)

from .evaluators import (
    PseudoLabelEvaluator,
    PseudoQualityReport,
    pseudo_quality_report,
)

__all__ = [
    'ConfusionMatrix',
    'IoUReport',
    'calculate_all_metrics',
    'evaluate_pairs',
    'iou_per_class',
    'mean_class_accuracy',
    'miou',
    'pixel_accuracy',
    'PseudoLabelEvaluator',
    'PseudoQualityReport',
    'pseudo_quality_report',
]
