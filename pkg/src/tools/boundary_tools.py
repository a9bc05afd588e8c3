# src/tools/boundary_tools.py
"""
Boundary Tools - boundary extraction, BE / BEv2 refinement and boundary losses

This module handles:
1. Boundary maps from label maps (B_TA, B_S, pseudo-map boundaries) and from
   instance masks (B_SAM)
2. Splitting pseudo-map boundaries into high / low confidence maps (B_E_H, B_SAM_L)
3. Refining boundaries inside an overlap region O_ij into B_ref
4. Boundary-enhanced losses against B_ref

A pixel is a boundary pixel when one of its 4 neighbours carries a different
(non-ignore) label, or for masks, when one of its 4 neighbours lies outside
the mask or outside the image.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.exceptions import ValidationError, require_same_dims
from src.storage.models import BoundaryMap, InstanceMaskSet, LabelMap, ProbMap
from src.storage.rle import decode_all

logger = logging.getLogger(__name__)


class BoundaryConfig(BaseModel):
    """Refinement parameters; alpha = 0 leaves only TA-agreement pixels"""
    alpha: float = Field(0.3, ge=0.0, le=1.0)
    snap_radius: int = Field(5, ge=0)
    variant: Literal["v1", "v2"] = "v2"

    model_config = {"frozen": True}


class Provenance(IntEnum):
    NONE = 0
    DISCARDED = 1
    TA_RETAINED = 2
    SAM_SNAP_ACCEPTED = 3
    TA_AGREEMENT = 4


@dataclass
class RefinementTrace:
    """Per-pixel provenance of the refinement decisions"""
    provenance: np.ndarray

    def count(self, kind: Provenance) -> int:
        return int((self.provenance == kind).sum())

    def to_dict(self) -> dict:
        return {
            "height": int(self.provenance.shape[0]),
            "width": int(self.provenance.shape[1]),
            "counts": {kind.name.lower(): self.count(kind) for kind in Provenance},
            "pixels": {
                kind.name.lower(): np.argwhere(self.provenance == kind).tolist()
                for kind in Provenance if kind != Provenance.NONE
            },
        }


@dataclass
class BoundaryLoss:
    value: float
    boundary_pixels: int
    degenerate: bool = False


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def boundary_from_labels(label_map: LabelMap) -> BoundaryMap:
    """Pixels with a 4-neighbour of a different non-ignore label"""
    labels = label_map.labels
    valid = label_map.valid
    boundary = np.zeros(labels.shape, dtype=bool)

    # vertical neighbours
    diff = (labels[1:, :] != labels[:-1, :]) & valid[1:, :] & valid[:-1, :]
    boundary[1:, :] |= diff
    boundary[:-1, :] |= diff
    # horizontal neighbours
    diff = (labels[:, 1:] != labels[:, :-1]) & valid[:, 1:] & valid[:, :-1]
    boundary[:, 1:] |= diff
    boundary[:, :-1] |= diff
    return BoundaryMap(boundary)


def mask_contour(bitmap: np.ndarray) -> np.ndarray:
    """Mask pixels with a 4-neighbour outside the mask or the image"""
    padded = np.pad(bitmap, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return bitmap & ~interior


def boundary_from_masks(masks: InstanceMaskSet) -> BoundaryMap:
    """Union of all mask contours (B_SAM)"""
    boundary = np.zeros(masks.dims.shape, dtype=bool)
    for bitmap in decode_all(masks):
        boundary |= mask_contour(bitmap)
    return BoundaryMap(boundary)


# ---------------------------------------------------------------------------
# Confidence split
# ---------------------------------------------------------------------------

def _require_two_classes(probs: ProbMap) -> None:
    if probs.num_classes < 2:
        raise ValidationError(f"top-2 gap needs at least 2 classes, got {probs.num_classes}")


def top2_gap_map(probs: ProbMap) -> np.ndarray:
    """D = p(1) - p(2) for every pixel"""
    _require_two_classes(probs)
    top2 = np.partition(probs.values, -2, axis=2)[..., -2:]
    return np.clip(top2[..., 1] - top2[..., 0], 0.0, 1.0)


def top2_gap(probs: ProbMap, pixel: Tuple[int, int]) -> float:
    """Gap between the two largest class probabilities at one pixel"""
    _require_two_classes(probs)
    row, col = pixel
    ordered = np.sort(probs.values[row, col])
    return float(ordered[-1] - ordered[-2])


def split_confidence_boundaries(bundle, b_sam: BoundaryMap) -> Tuple[BoundaryMap, BoundaryMap]:
    """
    Split boundaries by the fusion confidence map

    Returns:
        (B_E_H, B_SAM_L): pseudo-map boundaries where M = 1, SAM boundaries where M = 0
    """
    require_same_dims(bundle.pseudo_map.labels.shape, b_sam.bits.shape, what="pseudo bundle and SAM boundary")
    confident = bundle.confidence == 1
    b_e = boundary_from_labels(bundle.pseudo_map).mask
    return BoundaryMap(b_e & confident), BoundaryMap(b_sam.mask & ~confident)


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _snap_targets(b_sam: np.ndarray, radius: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    For every pixel, the row of the nearest SAM boundary pixel in its column
    within `radius` rows (the pixel itself at distance 0, upward on ties)

    Returns:
        (rows, found) arrays of shape (H, W)
    """
    height = b_sam.shape[0]
    rows = np.full(b_sam.shape, -1, dtype=np.int64)
    found = np.zeros(b_sam.shape, dtype=bool)
    row_index = np.arange(height)[:, None]
    for distance in range(0, radius + 1):
        for step in ((0,) if distance == 0 else (-distance, distance)):
            source = row_index + step
            inside = (source >= 0) & (source < height)
            src = np.clip(source, 0, height - 1)
            hit = b_sam[src[:, 0], :] & inside
            new = hit & ~found
            rows[new] = np.broadcast_to(src, b_sam.shape)[new]
            found |= new
    return rows, found


def _mark(provenance: np.ndarray, rows, cols, kind: Provenance) -> None:
    current = provenance[rows, cols]
    provenance[rows, cols] = np.maximum(current, kind)


def _snap_and_test(candidates, b_sam, d_min, cfg, provenance, fallback: Provenance) -> None:
    """Snap each candidate to SAM and accept the snapped pixel when min(D_i, D_j) < α"""
    snap_rows, found = _snap_targets(b_sam, cfg.snap_radius)
    cand_rows, cand_cols = np.nonzero(candidates)
    has_target = found[cand_rows, cand_cols]

    target_rows = snap_rows[cand_rows[has_target], cand_cols[has_target]]
    target_cols = cand_cols[has_target]
    accepted = d_min[target_rows, target_cols] < cfg.alpha
    _mark(provenance, target_rows[accepted], target_cols[accepted], Provenance.SAM_SNAP_ACCEPTED)

    # candidates that produced nothing
    rejected_rows = np.concatenate([cand_rows[~has_target], cand_rows[has_target][~accepted]])
    rejected_cols = np.concatenate([cand_cols[~has_target], cand_cols[has_target][~accepted]])
    _mark(provenance, rejected_rows, rejected_cols, fallback)


def refine_bev2(
    b_e_h: BoundaryMap,
    b_sam_l: BoundaryMap,
    b_ta_i: BoundaryMap,
    b_ta_j: BoundaryMap,
    probs_i: ProbMap,
    probs_j: ProbMap,
    b_sam: BoundaryMap,
    cfg: BoundaryConfig = BoundaryConfig(),
) -> Tuple[BoundaryMap, RefinementTrace]:
    """
    BEv2 refinement inside one overlap region

    Stage 1: a high-confidence pseudo boundary pixel that B_TA^i or B_TA^j also
    marks is kept (ta_agreement); the others are demoted to candidates.
    Stage 2: every candidate (B_SAM_L plus demotions) snaps to the nearest SAM
    boundary pixel q in its column within snap_radius; q is kept when
    min(D_i(q), D_j(q)) < alpha, otherwise the candidate is discarded.
    """
    require_same_dims(
        b_e_h.bits.shape, b_sam_l.bits.shape, b_ta_i.bits.shape, b_ta_j.bits.shape,
        probs_i.values.shape[:2], probs_j.values.shape[:2], b_sam.bits.shape,
        what="refinement inputs",
    )
    provenance = np.full(b_sam.bits.shape, Provenance.NONE, dtype=np.int8)

    high = b_e_h.mask
    agree = high & (b_ta_i.mask | b_ta_j.mask)
    _mark(provenance, *np.nonzero(agree), Provenance.TA_AGREEMENT)
    demoted = high & ~agree

    d_min = np.minimum(top2_gap_map(probs_i), top2_gap_map(probs_j))
    candidates = b_sam_l.mask | demoted
    _snap_and_test(candidates, b_sam.mask, d_min, cfg, provenance, Provenance.DISCARDED)

    trace = RefinementTrace(provenance)
    b_ref = BoundaryMap(np.isin(provenance, (Provenance.TA_AGREEMENT, Provenance.SAM_SNAP_ACCEPTED)))
    logger.debug(
        f"BEv2: {trace.count(Provenance.TA_AGREEMENT)} ta_agreement, "
        f"{trace.count(Provenance.SAM_SNAP_ACCEPTED)} sam_snap_accepted, "
        f"{trace.count(Provenance.DISCARDED)} discarded"
    )
    return b_ref, trace


def refine_be(
    b_ta_i: BoundaryMap,
    b_ta_j: BoundaryMap,
    probs_i: ProbMap,
    probs_j: ProbMap,
    b_sam: BoundaryMap,
    cfg: BoundaryConfig = BoundaryConfig(variant="v1"),
) -> Tuple[BoundaryMap, RefinementTrace]:
    """
    Original BE refinement: traverse B_TA^i

    A B_TA^i pixel also on B_TA^j and B_SAM is kept (ta_agreement). Otherwise it
    snaps to SAM; the snapped pixel is kept when min(D_i, D_j) < alpha, and the
    B_TA^i pixel itself is kept (ta_retained) when it is not.
    """
    require_same_dims(
        b_ta_i.bits.shape, b_ta_j.bits.shape, probs_i.values.shape[:2],
        probs_j.values.shape[:2], b_sam.bits.shape, what="refinement inputs",
    )
    provenance = np.full(b_sam.bits.shape, Provenance.NONE, dtype=np.int8)
    traversed = b_ta_i.mask
    agree = traversed & b_ta_j.mask & b_sam.mask
    _mark(provenance, *np.nonzero(agree), Provenance.TA_AGREEMENT)

    d_min = np.minimum(top2_gap_map(probs_i), top2_gap_map(probs_j))
    _snap_and_test(traversed & ~agree, b_sam.mask, d_min, cfg, provenance, Provenance.TA_RETAINED)

    trace = RefinementTrace(provenance)
    b_ref = BoundaryMap(provenance >= Provenance.TA_RETAINED)
    return b_ref, trace


def refine(
    bundle,
    b_ta_i: BoundaryMap,
    b_ta_j: BoundaryMap,
    probs_i: ProbMap,
    probs_j: ProbMap,
    b_sam: BoundaryMap,
    cfg: BoundaryConfig = BoundaryConfig(),
    split: Optional[Tuple[BoundaryMap, BoundaryMap]] = None,
) -> Tuple[BoundaryMap, RefinementTrace]:
    """
    Run the configured refinement variant on one overlap region

    Args:
        split: (B_E_H, B_SAM_L) traced on a larger map and cropped to the
            region; derived from the bundle when omitted
    """
    require_same_dims(
        bundle.pseudo_map.labels.shape, bundle.confidence.shape, b_ta_i.bits.shape, b_sam.bits.shape,
        what="pseudo bundle and refinement inputs",
    )
    if cfg.variant == "v1":
        return refine_be(b_ta_i, b_ta_j, probs_i, probs_j, b_sam, cfg)
    b_e_h, b_sam_l = split if split is not None else split_confidence_boundaries(bundle, b_sam)
    return refine_bev2(b_e_h, b_sam_l, b_ta_i, b_ta_j, probs_i, probs_j, b_sam, cfg)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _hamming(a: BoundaryMap, b: BoundaryMap) -> int:
    return int(np.count_nonzero(a.bits != b.bits))


def _normalise(hamming: int, b_ref: BoundaryMap, reduction: str, name: str) -> BoundaryLoss:
    c_o = b_ref.count
    if reduction == "sum":
        return BoundaryLoss(float(hamming), c_o, degenerate=(c_o == 0))
    if c_o == 0:
        logger.warning(f"⚠️  {name}: B_ref is empty, loss defined as 0")
        return BoundaryLoss(0.0, 0, degenerate=True)
    return BoundaryLoss(hamming / c_o, c_o)


def boundary_loss_ta(
    b_ref: BoundaryMap, b_ta_i: BoundaryMap, b_ta_j: BoundaryMap, reduction: str = "mean"
) -> BoundaryLoss:
    """(|B_ref - B_TA^i| + |B_ref - B_TA^j|) / C_o"""
    require_same_dims(b_ref.bits.shape, b_ta_i.bits.shape, b_ta_j.bits.shape, what="boundary maps")
    return _normalise(_hamming(b_ref, b_ta_i) + _hamming(b_ref, b_ta_j), b_ref, reduction, "bd_ta")


def boundary_loss_student(b_ref: BoundaryMap, b_s: BoundaryMap, reduction: str = "mean") -> BoundaryLoss:
    """|B_ref - B_S| / C_o"""
    require_same_dims(b_ref.bits.shape, b_s.bits.shape, what="boundary maps")
    return _normalise(_hamming(b_ref, b_s), b_ref, reduction, "bd_student")
