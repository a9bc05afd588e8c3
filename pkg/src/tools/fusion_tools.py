# src/tools/fusion_tools.py
"""
Fusion Tools - CTCFv2 label assignment for class-agnostic instance masks

This module handles:
1. Counting TA labels inside every instance mask (label histogram, lcr)
2. Splitting masks into Large / Medium / Small size levels with 1-D k-means
3. Deriving one threshold θ per size level (mean lcr of the top label)
4. Choosing each mask's label: top label when lcr >= θ, otherwise the
   top-3 label with the lowest Shannon entropy
5. Painting the labelled masks into the pseudo map E_i and confidence map M_i

Terminology:
- lcr (label coverage rate) = share of a mask's pixels whose TA argmax is a label
- direct_lcr path = confident masks (M_i = 1), entropy path = ambiguous masks (M_i = 0)
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy.special import entr

from src.exceptions import UndefinedMetricError, ValidationError, require_same_dims
from src.storage.codecs import argmax_labels, softmax
from src.storage.models import ImageDims, InstanceMask, InstanceMaskSet, LabelMap, LogitsMap, ProbMap
from src.storage.rle import decode_all, decode_rle

logger = logging.getLogger(__name__)

# Entropies closer than this are treated as equal before count / label tie-breaks
ENTROPY_TIE_TOLERANCE = 1e-12
LLOYD_MAX_ITERATIONS = 100


class SizeLevel(str, Enum):
    LARGE = "Large"
    MEDIUM = "Medium"
    SMALL = "Small"


# Clusters ranked by centroid, largest first
LEVEL_ORDER = (SizeLevel.LARGE, SizeLevel.MEDIUM, SizeLevel.SMALL)


@dataclass
class SizeLevels:
    """Size level of every mask plus the per-level thresholds"""
    assignment: Dict[int, SizeLevel]
    thresholds: Dict[SizeLevel, Optional[Fraction]] = field(default_factory=dict)

    def members(self, level: SizeLevel) -> List[int]:
        return [mask_id for mask_id, lvl in self.assignment.items() if lvl == level]


class LabelDecision(BaseModel):
    """How one instance mask got its label"""
    mask_id: int
    label: int
    path: Literal["direct_lcr", "entropy"]
    lcr_top: float
    area: int
    level: Optional[str] = None
    theta: Optional[float] = None
    entropy_values: Optional[Dict[int, float]] = None
    window_id: Optional[int] = None


@dataclass
class PseudoLabelBundle:
    """Pseudo semantic map E_i, confidence map M_i and the per-mask decisions"""
    pseudo_map: LabelMap
    confidence: np.ndarray
    decisions: List[LabelDecision] = field(default_factory=list)

    def __post_init__(self):
        self.confidence = np.ascontiguousarray(self.confidence, dtype=np.uint8)
        require_same_dims(self.pseudo_map.labels.shape, self.confidence.shape, what="pseudo map and confidence map")

    @property
    def dims(self) -> ImageDims:
        return self.pseudo_map.dims

    @property
    def high_confidence_map(self) -> LabelMap:
        """E_H: pseudo labels where M = 1, ignore elsewhere"""
        labels = np.where(self.confidence == 1, self.pseudo_map.labels, self.pseudo_map.ignore_label)
        return self.pseudo_map.with_labels(labels)


# ---------------------------------------------------------------------------
# Histogram / lcr
# ---------------------------------------------------------------------------

def _bitmap(mask: Union[InstanceMask, np.ndarray], dims: ImageDims) -> np.ndarray:
    if isinstance(mask, InstanceMask):
        return decode_rle(mask, dims)
    bitmap = np.asarray(mask, dtype=bool)
    require_same_dims(bitmap.shape, dims.shape, what="mask and label map")
    return bitmap


def label_histogram(mask: Union[InstanceMask, np.ndarray], ta_argmax: LabelMap) -> List[Tuple[int, int]]:
    """
    Count TA labels inside a mask

    Returns:
        [(label, count), ...] sorted by count descending, then label ascending;
        ignore-label pixels are not counted, so an all-ignore mask gives []

    Example:
        10-px mask with 9 px of class 3 and 1 px of class 1 -> [(3, 9), (1, 1)]
    """
    bitmap = _bitmap(mask, ta_argmax.dims)
    values = ta_argmax.labels[bitmap]
    values = values[values != ta_argmax.ignore_label]
    if values.size == 0:
        return []
    counts = np.bincount(values, minlength=ta_argmax.num_classes)
    present = np.flatnonzero(counts)
    return sorted(((int(c), int(counts[c])) for c in present), key=lambda lc: (-lc[1], lc[0]))


def lcr_of_top(histogram: Sequence[Tuple[int, int]]) -> Fraction:
    """Exact coverage rate of the most frequent label"""
    total = sum(count for _, count in histogram)
    return Fraction(histogram[0][1], total)


# ---------------------------------------------------------------------------
# Size levels
# ---------------------------------------------------------------------------

def _partition_sse(prefix1: List[int], prefix2: List[int], prefixn: List[int], bounds: Sequence[int]) -> Fraction:
    """Exact within-cluster SSE of contiguous groups [bounds[k], bounds[k+1])"""
    sse = Fraction(0)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        s1 = prefix1[hi] - prefix1[lo]
        s2 = prefix2[hi] - prefix2[lo]
        n = prefixn[hi] - prefixn[lo]
        sse += s2 - Fraction(s1 * s1, n)
    return sse


def _exact_groups(values: List[int], weights: List[int], k: int) -> List[int]:
    """
    Globally SSE-optimal split of sorted distinct values into k contiguous groups

    Returns the group index (0 = smallest values) of every distinct value.
    Ties in SSE keep the first split in lexicographic order.
    """
    n = len(values)
    prefix1, prefix2, prefixn = [0], [0], [0]
    for v, w in zip(values, weights):
        prefix1.append(prefix1[-1] + v * w)
        prefix2.append(prefix2[-1] + v * v * w)
        prefixn.append(prefixn[-1] + w)

    if k == 1:
        return [0] * n
    if k == 2:
        splits = [(s,) for s in range(1, n)]
    else:
        splits = [(s1, s2) for s1 in range(1, n - 1) for s2 in range(s1 + 1, n)]

    best_split, best_sse = None, None
    for split in splits:
        sse = _partition_sse(prefix1, prefix2, prefixn, (0,) + split + (n,))
        if best_sse is None or sse < best_sse:
            best_split, best_sse = split, sse

    groups = []
    bounds = (0,) + best_split + (n,)
    for g, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        groups.extend([g] * (hi - lo))
    return groups


def _lloyd_groups(areas: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from (min, median, max) initialisation; cluster index per area"""
    if k == 1:
        centroids = np.array([areas.mean()])
    elif k == 2:
        centroids = np.array([areas.min(), areas.max()], dtype=np.float64)
    else:
        centroids = np.array([areas.min(), np.median(areas), areas.max()], dtype=np.float64)

    assignment = None
    for _ in range(LLOYD_MAX_ITERATIONS):
        # argmin picks the first (lowest-centroid) cluster on distance ties
        order = np.argsort(centroids, kind="stable")
        distances = np.abs(areas[:, None] - centroids[order][None, :])
        new_assignment = order[np.argmin(distances, axis=1)]
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            members = areas[assignment == c]
            if members.size:
                centroids[c] = members.mean()
    return assignment, centroids


def kmeans_area_levels(areas: Sequence[Tuple[int, int]], method: Literal["exact", "lloyd"] = "exact") -> SizeLevels:
    """
    Split masks into Large / Medium / Small by 1-D k-means on their areas

    Args:
        areas: [(mask_id, pixel_count), ...]
        method: "exact" returns the SSE-optimal clustering of the sorted distinct
            areas; "lloyd" runs Lloyd iterations from min/median/max seeds

    k = min(3, number of distinct areas). Non-empty clusters are ranked by
    centroid: the largest is Large, then Medium, then Small; masks with equal
    areas always share a level.

    Example:
        areas 1000, 980, 500, 490, 10, 8 -> Large {1000, 980},
        Medium {500, 490}, Small {10, 8}
    """
    if not areas:
        raise ValidationError("k-means needs at least one mask area")
    ids = [int(mask_id) for mask_id, _ in areas]
    values = np.array([int(a) for _, a in areas], dtype=np.int64)
    distinct, weights = np.unique(values, return_counts=True)
    k = min(3, len(distinct))

    if method == "exact":
        groups = _exact_groups(distinct.tolist(), weights.tolist(), k)
        group_of_value = dict(zip(distinct.tolist(), groups))
        cluster = np.array([group_of_value[v] for v in values.tolist()])
        centroids = np.array([values[cluster == g].mean() for g in range(k)])
    elif method == "lloyd":
        cluster, centroids = _lloyd_groups(values.astype(np.float64), k)
    else:
        raise ValidationError(f"unknown k-means method {method!r}")

    used = sorted({int(c) for c in cluster}, key=lambda c: -centroids[c])
    level_of_cluster = {c: LEVEL_ORDER[rank] for rank, c in enumerate(used)}
    assignment = {mask_id: level_of_cluster[int(c)] for mask_id, c in zip(ids, cluster)}
    return SizeLevels(assignment=assignment)


def level_thresholds(levels: SizeLevels, lcr_tops: Dict[int, Fraction]) -> Dict[SizeLevel, Optional[Fraction]]:
    """
    θ per level = mean lcr of the top label over that level's masks

    Empty levels get None (they are never consulted). Arithmetic is exact, so
    a level whose masks all share one lcr gets exactly that value.
    """
    thresholds: Dict[SizeLevel, Optional[Fraction]] = {}
    for level in LEVEL_ORDER:
        members = levels.members(level)
        if not members:
            thresholds[level] = None
            continue
        thresholds[level] = sum((Fraction(lcr_tops[m]) for m in members), Fraction(0)) / len(members)
    levels.thresholds = thresholds
    return thresholds


# ---------------------------------------------------------------------------
# Entropy
# ---------------------------------------------------------------------------

def pixel_entropy(ta_probs: ProbMap) -> np.ndarray:
    """Per-pixel Shannon entropy -sum(q ln q), natural log"""
    return entr(ta_probs.values).sum(axis=2)


def shannon_entropy_for_label(
    mask: Union[InstanceMask, np.ndarray],
    label: int,
    ta_probs: ProbMap,
    ta_argmax: Optional[np.ndarray] = None,
    entropy_map: Optional[np.ndarray] = None,
) -> float:
    """
    Mean per-pixel entropy over the mask pixels whose TA argmax is `label`

    Raises:
        UndefinedMetricError if no mask pixel votes for `label`
    """
    bitmap = _bitmap(mask, ta_probs.dims)
    if ta_argmax is None:
        ta_argmax = np.argmax(ta_probs.values, axis=2)
    if entropy_map is None:
        entropy_map = pixel_entropy(ta_probs)
    selected = bitmap & (ta_argmax == label)
    if not selected.any():
        raise UndefinedMetricError(f"no mask pixel has TA argmax {label}")
    return float(entropy_map[selected].mean())


def _pick_by_entropy(entropies: Dict[int, float], counts: Dict[int, int]) -> int:
    best = min(entropies.values())
    tied = [label for label, e in entropies.items() if e - best <= ENTROPY_TIE_TOLERANCE]
    return min(tied, key=lambda label: (-counts[label], label))


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def fuse(
    masks: InstanceMaskSet,
    ta_logits: LogitsMap,
    ignore_label: int = 255,
    theta: Optional[float] = None,
    level_method: Literal["exact", "lloyd"] = "exact",
) -> PseudoLabelBundle:
    """
    CTCFv2 fusion of instance masks with TA logits

    Args:
        masks: SAM-style instance masks for the window
        ta_logits: TA logits for the same window
        ignore_label: ignore value recorded on the pseudo map
        theta: when given, every mask is tested against this single threshold
            (fixed-θ CTCF) and no size levels are computed
        level_method: k-means flavour for the size levels

    Returns:
        PseudoLabelBundle with E_i, M_i and one decision per labelled mask
    """
    require_same_dims(masks.dims.shape, ta_logits.dims.shape, what="instance masks and TA logits")
    if ta_logits.num_classes < 2:
        raise ValidationError("fusion needs at least 2 classes")

    ta_argmax = argmax_labels(ta_logits, ignore_label)
    ta_probs = softmax(ta_logits)
    entropy_map = pixel_entropy(ta_probs)
    bitmaps = decode_all(masks)

    # Histograms and lcr of the top label per mask
    histograms: Dict[int, List[Tuple[int, int]]] = {}
    lcr_tops: Dict[int, Fraction] = {}
    for mask, bitmap in zip(masks, bitmaps):
        hist = label_histogram(bitmap, ta_argmax)
        if not hist:
            logger.debug(f"Mask {mask.id} covers only ignore pixels, skipped")
            continue
        histograms[mask.id] = hist
        lcr_tops[mask.id] = lcr_of_top(hist)

    # Thresholds per mask
    if theta is not None:
        fixed = Fraction(theta)
        mask_theta = {mask_id: fixed for mask_id in histograms}
        mask_level: Dict[int, Optional[SizeLevel]] = {mask_id: None for mask_id in histograms}
    elif histograms:
        levels = kmeans_area_levels([(m.id, m.area) for m in masks if m.id in histograms], method=level_method)
        thresholds = level_thresholds(levels, lcr_tops)
        mask_level = dict(levels.assignment)
        mask_theta = {mask_id: thresholds[level] for mask_id, level in mask_level.items()}
    else:
        mask_theta, mask_level = {}, {}

    # Label decision per mask
    decisions: List[LabelDecision] = []
    by_id = {}
    for mask, bitmap in zip(masks, bitmaps):
        if mask.id not in histograms:
            continue
        hist = histograms[mask.id]
        level = mask_level[mask.id]
        mask_th = mask_theta[mask.id]
        if lcr_tops[mask.id] >= mask_th:
            label, path, entropy_values = hist[0][0], "direct_lcr", None
        else:
            candidates = hist[:3]
            counts = dict(candidates)
            entropy_values = {
                label: shannon_entropy_for_label(bitmap, label, ta_probs, ta_argmax.labels, entropy_map)
                for label, _ in candidates
            }
            label, path = _pick_by_entropy(entropy_values, counts), "entropy"
        decision = LabelDecision(
            mask_id=mask.id, label=label, path=path,
            lcr_top=float(lcr_tops[mask.id]), area=mask.area,
            level=level.value if level is not None else None,
            theta=float(mask_th), entropy_values=entropy_values,
        )
        decisions.append(decision)
        by_id[mask.id] = (decision, bitmap)

    # Paint large masks first so smaller (nested) masks overwrite them
    pseudo = ta_argmax.labels.copy()
    confidence = np.zeros(pseudo.shape, dtype=np.uint8)
    for decision in sorted(decisions, key=lambda d: (-d.area, d.mask_id)):
        _, bitmap = by_id[decision.mask_id]
        pseudo[bitmap] = decision.label
        confidence[bitmap] = 1 if decision.path == "direct_lcr" else 0

    direct = sum(1 for d in decisions if d.path == "direct_lcr")
    logger.debug(f"Fused {len(decisions)} masks: {direct} direct_lcr, {len(decisions) - direct} entropy")
    return PseudoLabelBundle(
        pseudo_map=LabelMap(pseudo, ta_logits.num_classes, ignore_label),
        confidence=confidence,
        decisions=decisions,
    )
