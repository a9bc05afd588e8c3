# src/tools/consistency_tools.py
"""
Consistency between the horizontal-window and vertical-window TA predictions
over an overlap region O_ij
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.exceptions import DimensionMismatchError
from src.storage.codecs import softmax
from src.storage.models import LogitsMap, ProbMap
from src.tools.window_tools import OverlapRegion

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverlapPrediction:
    """S_i(O_ij) and S_j(O_ij) as class probabilities"""
    region: Optional[OverlapRegion]
    probs_h: ProbMap
    probs_v: ProbMap

    def __post_init__(self):
        if self.probs_h.values.shape != self.probs_v.values.shape:
            raise DimensionMismatchError(
                f"overlap predictions disagree: {self.probs_h.values.shape} vs {self.probs_v.values.shape}"
            )
        if self.region is not None:
            _, _, height, width = self.region.rect
            if self.probs_h.values.shape[:2] != (height, width):
                raise DimensionMismatchError(
                    f"predictions of shape {self.probs_h.values.shape[:2]} do not match region {height}x{width}"
                )

    @classmethod
    def from_logits(cls, region: Optional[OverlapRegion], logits_h: LogitsMap, logits_v: LogitsMap) -> "OverlapPrediction":
        return cls(region, softmax(logits_h), softmax(logits_v))


def cc_loss(op: OverlapPrediction) -> float:
    """Mean over all H*W*C entries of (probs_h - probs_v)^2"""
    diff = op.probs_h.values - op.probs_v.values
    return float(np.mean(diff * diff))


def cc_loss_from_logits(logits_h: LogitsMap, logits_v: LogitsMap, raw_logits: bool = False) -> float:
    """
    CC loss straight from two logits crops

    Softmaxes both sides first; with raw_logits=True the MSE is taken on the
    logits themselves.
    """
    if logits_h.values.shape != logits_v.values.shape:
        raise DimensionMismatchError(
            f"overlap logits disagree: {logits_h.values.shape} vs {logits_v.values.shape}"
        )
    if not raw_logits:
        return cc_loss(OverlapPrediction.from_logits(None, logits_h, logits_v))
    diff = logits_h.values.astype(np.float64) - logits_v.values.astype(np.float64)
    return float(np.mean(diff * diff))


def disagreement_rate(op: OverlapPrediction) -> float:
    """Share of pixels whose argmax differs between the two windows"""
    arg_h = np.argmax(op.probs_h.values, axis=2)
    arg_v = np.argmax(op.probs_v.values, axis=2)
    return float(np.mean(arg_h != arg_v))
