"""
Evaluator Classes for pseudo-label quality

Provides:
- pseudo_quality_report: one scene, pseudo map vs TA argmax against ground truth
- PseudoLabelEvaluator: many scenes, pooled metrics and a text report
"""

import json
import logging
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from src.exceptions import UndefinedMetricError, require_same_dims
from src.storage.models import LabelMap
from .metrics import ConfusionMatrix, iou_per_class, miou

logger = logging.getLogger(__name__)

# Pseudo map must beat TA by this much mIoU for a scene to count as improved
IMPROVEMENT_MARGIN = 0.05


class PseudoQualityReport(BaseModel):
    miou_pseudo: float
    miou_ta: float
    gain: float
    miou_confident: Optional[float] = None
    per_class_iou_pseudo: List[Optional[float]]
    per_class_iou_ta: List[Optional[float]]
    evaluated_pixels: int
    confident_pixels: int
    variant: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def _matrices(gt: LabelMap, bundle, ta_argmax: LabelMap):
    num_classes = gt.num_classes
    pseudo_cm = ConfusionMatrix(num_classes, gt.ignore_label).accumulate(gt, bundle.pseudo_map)
    ta_cm = ConfusionMatrix(num_classes, gt.ignore_label).accumulate(gt, ta_argmax)
    confident_gt = gt.with_labels(np.where(bundle.confidence == 1, gt.labels, gt.ignore_label))
    confident_cm = ConfusionMatrix(num_classes, gt.ignore_label).accumulate(confident_gt, bundle.pseudo_map)
    return pseudo_cm, ta_cm, confident_cm


def pseudo_quality_report(gt: LabelMap, bundle, ta_argmax: LabelMap, variant: Optional[str] = None) -> PseudoQualityReport:
    """
    Compare the pseudo map E and the raw TA argmax against ground truth

    Args:
        gt: ground-truth label map
        bundle: PseudoLabelBundle (pseudo map + confidence map)
        ta_argmax: TA hard prediction for the same image
        variant: tag recorded on the report

    Returns:
        PseudoQualityReport; gain = mIoU(E) - mIoU(TA), miou_confident is taken
        over M = 1 pixels only and is None when nothing is defined there
    """
    require_same_dims(gt.labels.shape, bundle.pseudo_map.labels.shape, ta_argmax.labels.shape, what="quality inputs")
    pseudo_cm, ta_cm, confident_cm = _matrices(gt, bundle, ta_argmax)
    miou_pseudo = miou(pseudo_cm)
    miou_ta = miou(ta_cm)
    try:
        miou_confident = miou(confident_cm)
    except UndefinedMetricError:
        miou_confident = None
    return PseudoQualityReport(
        miou_pseudo=miou_pseudo,
        miou_ta=miou_ta,
        gain=miou_pseudo - miou_ta,
        miou_confident=miou_confident,
        per_class_iou_pseudo=iou_per_class(pseudo_cm),
        per_class_iou_ta=iou_per_class(ta_cm),
        evaluated_pixels=pseudo_cm.total,
        confident_pixels=confident_cm.total,
        variant=variant,
    )


class PseudoLabelEvaluator:
    """Evaluate pseudo-label quality over many scenes"""

    def __init__(self, num_classes: int, ignore_label: int = 255):
        self.num_classes = num_classes
        self.ignore_label = ignore_label
        self.pseudo_cm = ConfusionMatrix(num_classes, ignore_label)
        self.ta_cm = ConfusionMatrix(num_classes, ignore_label)
        self.results: List[Dict[str, Any]] = []

    def evaluate_scene(self, scene_id: str, gt: LabelMap, bundle, ta_argmax: LabelMap,
                       variant: Optional[str] = None) -> PseudoQualityReport:
        """Score one scene and pool its confusion matrices"""
        report = pseudo_quality_report(gt, bundle, ta_argmax, variant)
        pseudo_cm, ta_cm, _ = _matrices(gt, bundle, ta_argmax)
        self.pseudo_cm = self.pseudo_cm + pseudo_cm
        self.ta_cm = self.ta_cm + ta_cm
        self.add_report(scene_id, report)
        return report

    def add_report(self, scene_id: str, report: PseudoQualityReport) -> None:
        self.results.append({'scene': scene_id, 'report': report})

    def get_aggregate_metrics(self) -> Dict[str, Any]:
        """Average and pooled metrics across all scenes"""
        if not self.results:
            return {}

        reports = [r['report'] for r in self.results]
        gains = [r.gain for r in reports]
        aggregate = {
            'total_scenes': len(reports),
            'average_miou_pseudo': float(np.mean([r.miou_pseudo for r in reports])),
            'average_miou_ta': float(np.mean([r.miou_ta for r in reports])),
            'average_gain': float(np.mean(gains)),
            'improved_scenes': sum(1 for g in gains if g >= IMPROVEMENT_MARGIN),
            'improvement_rate': sum(1 for g in gains if g >= IMPROVEMENT_MARGIN) / len(gains),
        }
        if self.pseudo_cm.total:
            aggregate['pooled_miou_pseudo'] = miou(self.pseudo_cm)
            aggregate['pooled_miou_ta'] = miou(self.ta_cm)
        return aggregate

    def to_json(self) -> str:
        payload = {
            'aggregate': self.get_aggregate_metrics(),
            'scenes': [
                {'scene': r['scene'], **r['report'].model_dump(mode="json")} for r in self.results
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def generate_report(self, filepath: str = None) -> str:
        """Generate evaluation report"""
        agg = self.get_aggregate_metrics()

        report = f"""
╔══════════════════════════════════════════════════════════╗
║        PSEUDO-LABEL QUALITY EVALUATION REPORT            ║
╚══════════════════════════════════════════════════════════╝

📊 OVERALL METRICS
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
Total Scenes Evaluated:  {agg.get('total_scenes', 0)}

🎯 mIoU
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
Average mIoU (pseudo):   {agg.get('average_miou_pseudo', 0)*100:.2f}
Average mIoU (TA):       {agg.get('average_miou_ta', 0)*100:.2f}
Average Gain:            {agg.get('average_gain', 0)*100:+.2f}
Pooled mIoU (pseudo):    {agg.get('pooled_miou_pseudo', 0)*100:.2f}
Pooled mIoU (TA):        {agg.get('pooled_miou_ta', 0)*100:.2f}

✅ IMPROVEMENT (gain >= {IMPROVEMENT_MARGIN*100:.0f} points)
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
Improved Scenes:         {agg.get('improved_scenes', 0)} / {agg.get('total_scenes', 0)}
Improvement Rate:        {agg.get('improvement_rate', 0)*100:.1f}%
"""

        rate = agg.get('improvement_rate', 0)
        if rate >= 0.9:
            report += "Grade: PASS ✅\n"
        elif rate >= 0.5:
            report += "Grade: PARTIAL ⚠️\n"
        else:
            report += "Grade: FAIL ❌\n"

        if filepath:
            with open(filepath, 'w') as f:
                f.write(report)

        return report
