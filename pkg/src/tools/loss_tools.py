# src/tools/loss_tools.py
"""
Loss Tools - the knowledge-adaptation loss family

This module handles:
1. Whole-image cross entropy of the student against the stitched TA map
2. Patch cross entropy against a pseudo map, weighted by (1 + λ·M)
3. Student / TA totals and the LossReport that carries every term

Per-window terms are accumulated as LossTerm (sum + pixel count) so a
whole-image mean over many windows is exact, not a mean of means.
"""
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import log_softmax

from src.exceptions import LabelRangeError, require_same_dims
from src.storage.models import LabelMap, LogitsMap

logger = logging.getLogger(__name__)

Reduction = Literal["mean", "sum"]


class LossWeights(BaseModel):
    """λ weights the reliable (M = 1) pixels of the patch CE"""
    lambda_: float = Field(0.2, ge=0.0, allow_inf_nan=False, alias="lambda")

    model_config = {"populate_by_name": True, "frozen": True}


@dataclass
class LossTerm:
    """Running sum of per-pixel losses and the number of pixels behind it"""
    total: float = 0.0
    count: int = 0
    degenerate: bool = False

    def __add__(self, other: "LossTerm") -> "LossTerm":
        return LossTerm(self.total + other.total, self.count + other.count, self.degenerate and other.degenerate)

    def value(self, reduction: Reduction = "mean") -> float:
        if reduction == "sum":
            return float(self.total)
        if self.count == 0:
            return 0.0
        return float(self.total / self.count)

    @classmethod
    def combine(cls, terms: List["LossTerm"]) -> "LossTerm":
        """Sum terms in list order; an empty list is degenerate"""
        combined = cls(degenerate=True)
        for term in terms:
            combined = combined + term
        return combined


# ---------------------------------------------------------------------------
# Cross entropy
# ---------------------------------------------------------------------------

def _pixel_nll(pred_logits: LogitsMap, target: LabelMap, ignore_label: Optional[int]):
    """Per-pixel -ln softmax(pred)[target] over the valid pixels, plus the valid mask"""
    require_same_dims(pred_logits.dims.shape, target.dims.shape, what="prediction and target")
    ignore = target.ignore_label if ignore_label is None else ignore_label
    valid = target.labels != ignore
    labels = target.labels[valid].astype(np.int64)
    if labels.size and labels.max() >= pred_logits.num_classes:
        raise LabelRangeError(
            f"target label {int(labels.max())} >= prediction classes {pred_logits.num_classes}"
        )
    log_probs = log_softmax(pred_logits.values.astype(np.float64), axis=2)[valid]
    nll = -np.take_along_axis(log_probs, labels[:, None], axis=1)[:, 0]
    return nll, valid


def cross_entropy_term(pred_logits: LogitsMap, target: LabelMap, ignore_label: Optional[int] = None) -> LossTerm:
    nll, _ = _pixel_nll(pred_logits, target, ignore_label)
    if nll.size == 0:
        logger.warning("⚠️  cross entropy: no valid target pixels, loss defined as 0")
        return LossTerm(0.0, 0, degenerate=True)
    return LossTerm(float(nll.sum()), int(nll.size))


def cross_entropy(
    pred_logits: LogitsMap,
    target: LabelMap,
    ignore_label: Optional[int] = None,
    reduction: Reduction = "mean",
) -> float:
    """
    Pixel-wise cross entropy (natural log) over the non-ignore target pixels

    Args:
        pred_logits: predicted logits, H x W x C
        target: hard target map; its ignore label is used unless one is given
        reduction: "mean" over valid pixels or the literal "sum"

    Example:
        uniform logits over 4 classes -> ln 4 for any target
    """
    return cross_entropy_term(pred_logits, target, ignore_label).value(reduction)


def weighted_patch_ce_term(pred_logits: LogitsMap, bundle, weights: LossWeights = LossWeights()) -> LossTerm:
    """Σ (1 + λ·M(p)) · CE_p(pred, E) over the valid pseudo-map pixels"""
    require_same_dims(bundle.pseudo_map.labels.shape, bundle.confidence.shape, what="pseudo bundle")
    nll, valid = _pixel_nll(pred_logits, bundle.pseudo_map, None)
    if nll.size == 0:
        logger.warning("⚠️  patch cross entropy: no valid pseudo-label pixels, loss defined as 0")
        return LossTerm(0.0, 0, degenerate=True)
    reliable = bundle.confidence[valid] == 1
    base = float(nll.sum())
    masked = float(nll[reliable].sum())
    return LossTerm(base + weights.lambda_ * masked, int(nll.size))


def weighted_patch_ce(
    pred_logits: LogitsMap,
    bundle,
    weights: LossWeights = LossWeights(),
    reduction: Reduction = "mean",
) -> float:
    """
    Patch CE against a pseudo map E with reliable pixels up-weighted

    Equals CE(pred, E) + λ · CE restricted to M = 1 pixels (both normalised by
    the same valid-pixel count), so the value is affine in λ.
    """
    return weighted_patch_ce_term(pred_logits, bundle, weights).value(reduction)


# ---------------------------------------------------------------------------
# Totals
# ---------------------------------------------------------------------------

def student_total(ce_whole: float, ce_patch_student: float, bd_student: float) -> float:
    return ce_whole + ce_patch_student + bd_student


def ta_total(ce_patch_ta: float, cc: float, bd_ta: float) -> float:
    return ce_patch_ta + cc + bd_ta


class LossReport(BaseModel):
    """Every loss term of one pass; totals are always derived from the parts"""
    ce_whole: float
    ce_patch_student: float
    ce_patch_ta: float
    bd_student: float
    bd_ta: float
    cc: float
    total_student: float
    total_ta: float
    reduction: Reduction = "mean"
    lambda_: float = Field(0.2, alias="lambda")
    valid_pixel_counts: Dict[str, int] = Field(default_factory=dict)
    cc_per_region: List[float] = Field(default_factory=list)
    disagreement_per_region: List[float] = Field(default_factory=list)
    degenerate_terms: List[str] = Field(default_factory=list)
    variant: Optional[str] = None

    model_config = {"populate_by_name": True}

    @classmethod
    def from_parts(
        cls,
        ce_whole: float,
        ce_patch_student: float,
        ce_patch_ta: float,
        bd_student: float,
        bd_ta: float,
        cc: float,
        **extra,
    ) -> "LossReport":
        return cls(
            ce_whole=ce_whole,
            ce_patch_student=ce_patch_student,
            ce_patch_ta=ce_patch_ta,
            bd_student=bd_student,
            bd_ta=bd_ta,
            cc=cc,
            total_student=student_total(ce_whole, ce_patch_student, bd_student),
            total_ta=ta_total(ce_patch_ta, cc, bd_ta),
            **extra,
        )

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True, indent=2)
