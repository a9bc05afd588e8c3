import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import brute_fuse, exhaustive_levels
from src.exceptions import DimensionMismatchError, UndefinedMetricError, ValidationError
from src.storage.codecs import argmax_labels, softmax
from src.storage.models import ImageDims, InstanceMaskSet, LogitsMap
from src.storage.rle import decode_rle, masks_from_bitmaps
from src.tools.fusion_tools import (
    SizeLevel,
    fuse,
    kmeans_area_levels,
    label_histogram,
    lcr_of_top,
    level_thresholds,
    pixel_entropy,
    shannon_entropy_for_label,
)


def _halves(height, width):
    """Left and right halves of an image as two bitmaps"""
    left = np.zeros((height, width), dtype=bool)
    left[:, : width // 2] = True
    return [left, ~left]


def _random_instance(rng, quarter_steps=False):
    """Up to 16x16 logits with C <= 5 and up to 6 rectangular, partly filled masks"""
    height, width = (int(s) for s in rng.integers(1, 17, size=2))
    num_classes = int(rng.integers(2, 6))
    if quarter_steps:
        # exactly representable values keep per-pixel shifts exact in float32
        logits = (rng.integers(-16, 17, size=(height, width, num_classes)) / 4).astype(np.float32)
    else:
        logits = rng.normal(scale=2.0, size=(height, width, num_classes)).astype(np.float32)
    bitmaps = []
    for _ in range(int(rng.integers(0, 7))):
        r0, r1 = sorted(int(v) for v in rng.integers(0, height + 1, size=2))
        c0, c1 = sorted(int(v) for v in rng.integers(0, width + 1, size=2))
        bitmap = np.zeros((height, width), dtype=bool)
        bitmap[r0:r1 + 1, c0:c1 + 1] = rng.random((min(r1 + 1, height) - r0, min(c1 + 1, width) - c0)) < 0.8
        bitmaps.append(bitmap)
    return masks_from_bitmaps(bitmaps, ImageDims(height, width)), logits


def _last_painter(masks):
    """Id of the mask that paints each pixel last (larger masks first), -1 where none does"""
    painter = np.full(masks.dims.shape, -1)
    for mask in sorted(masks, key=lambda m: (-m.area, m.id)):
        painter[decode_rle(mask, masks.dims)] = mask.id
    return painter


class TestHistogram:
    def test_counts_sorted_by_count_then_label(self, make_label_map):
        ta = make_label_map([[3, 3, 3, 3, 3], [3, 3, 3, 3, 1]], num_classes=4)
        mask = np.ones((2, 5), dtype=bool)
        hist = label_histogram(mask, ta)
        assert hist == [(3, 9), (1, 1)]
        assert lcr_of_top(hist) == Fraction(9, 10)

    def test_equal_counts_prefer_lower_label(self, make_label_map):
        ta = make_label_map([[2, 0, 2, 0]], num_classes=3)
        assert label_histogram(np.ones((1, 4), dtype=bool), ta) == [(0, 2), (2, 2)]

    def test_ignore_pixels_are_not_counted(self, make_label_map):
        ta = make_label_map([[255, 255, 1]], num_classes=2)
        assert label_histogram(np.array([[1, 1, 0]], dtype=bool), ta) == []
        assert label_histogram(np.array([[1, 1, 1]], dtype=bool), ta) == [(1, 1)]


class TestSizeLevels:
    def test_three_clear_groups(self):
        areas = list(enumerate([1000, 980, 500, 490, 10, 8]))
        levels = kmeans_area_levels(areas)
        assert levels.members(SizeLevel.LARGE) == [0, 1]
        assert levels.members(SizeLevel.MEDIUM) == [2, 3]
        assert levels.members(SizeLevel.SMALL) == [4, 5]

    def test_lloyd_agrees_on_clear_groups(self):
        areas = list(enumerate([1000, 980, 500, 490, 10, 8]))
        assert kmeans_area_levels(areas, method="lloyd").assignment == kmeans_area_levels(areas).assignment

    def test_single_distinct_area_is_large(self):
        levels = kmeans_area_levels([(0, 7), (1, 7), (2, 7)])
        assert set(levels.assignment.values()) == {SizeLevel.LARGE}

    def test_two_distinct_areas(self):
        levels = kmeans_area_levels([(0, 5), (1, 5), (2, 90)])
        assert levels.assignment == {0: SizeLevel.MEDIUM, 1: SizeLevel.MEDIUM, 2: SizeLevel.LARGE}

    def test_no_areas(self):
        with pytest.raises(ValidationError):
            kmeans_area_levels([])

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            kmeans_area_levels([(0, 1)], method="spectral")

    def test_matches_exhaustive_search(self, rng):
        for _ in range(500):
            n = int(rng.integers(1, 13))
            areas = [(i, int(a)) for i, a in enumerate(rng.integers(1, 40, size=n))]
            expected = exhaustive_levels(areas)
            got = {m: lvl.value for m, lvl in kmeans_area_levels(areas).assignment.items()}
            assert got == expected, areas

    def test_equal_areas_share_a_level(self, rng):
        for _ in range(100):
            areas = [(i, int(a)) for i, a in enumerate(rng.integers(1, 6, size=8))]
            for method in ("exact", "lloyd"):
                assignment = kmeans_area_levels(areas, method=method).assignment
                by_area = {}
                for mask_id, area in areas:
                    by_area.setdefault(area, set()).add(assignment[mask_id])
                assert all(len(v) == 1 for v in by_area.values())


class TestThresholds:
    def test_mean_lcr_per_level_and_none_for_empty(self):
        levels = kmeans_area_levels([(0, 100), (1, 100), (2, 3)])
        thresholds = level_thresholds(levels, {0: Fraction(1), 1: Fraction(1, 2), 2: Fraction(2, 3)})
        assert thresholds[SizeLevel.LARGE] == Fraction(3, 4)
        assert thresholds[SizeLevel.MEDIUM] == Fraction(2, 3)
        assert thresholds[SizeLevel.SMALL] is None
        assert levels.thresholds is thresholds


class TestEntropy:
    def test_uniform_and_one_hot(self):
        logits = LogitsMap(np.array([[[0.0, 0.0, 0.0, 0.0], [1000.0, 0.0, 0.0, 0.0]]]))
        entropy = pixel_entropy(softmax(logits))
        assert entropy[0, 0] == pytest.approx(math.log(4))
        assert entropy[0, 1] == 0.0

    def test_mean_over_voting_pixels_only(self, make_logits):
        logits = make_logits([[0, 0, 1]], 2, margin=[[1.0, 3.0, 2.0]])
        probs = softmax(logits)
        entropy = pixel_entropy(probs)
        value = shannon_entropy_for_label(np.ones((1, 3), dtype=bool), 0, probs)
        assert value == pytest.approx((entropy[0, 0] + entropy[0, 1]) / 2)

    def test_label_without_votes(self, make_logits):
        probs = softmax(make_logits([[0, 0]], 3))
        with pytest.raises(UndefinedMetricError):
            shannon_entropy_for_label(np.ones((1, 2), dtype=bool), 2, probs)


class TestFuse:
    def test_unanimous_masks_are_confident(self, make_logits, make_masks):
        labels = np.array([[0, 0, 1, 1], [0, 0, 1, 1]])
        bundle = fuse(make_masks(_halves(2, 4)), make_logits(labels, 2))
        assert bundle.pseudo_map.labels.tolist() == labels.tolist()
        assert bundle.confidence.tolist() == [[1] * 4] * 2
        assert [d.path for d in bundle.decisions] == ["direct_lcr", "direct_lcr"]
        assert all(d.theta == 1.0 for d in bundle.decisions)

    def test_entropy_path_prefers_confident_minority(self, make_logits, make_masks):
        # right mask: six weak votes for 1, four strong votes for 2
        labels = np.array([[0] * 5 + [1, 1, 1, 2, 2], [0] * 5 + [1, 1, 1, 2, 2]])
        margin = np.where(labels == 2, 5.0, 1.0)
        bundle = fuse(make_masks(_halves(2, 10)), make_logits(labels, 3, margin))
        right = next(d for d in bundle.decisions if d.mask_id == 1)
        assert right.path == "entropy"
        assert right.theta == pytest.approx(0.8)
        assert right.label == 2
        assert set(right.entropy_values) == {1, 2}
        assert bundle.pseudo_map.labels[:, 5:].tolist() == [[2] * 5] * 2
        assert bundle.confidence[:, 5:].sum() == 0
        assert bundle.confidence[:, :5].sum() == 10

    def test_entropy_tie_goes_to_larger_count(self, make_logits, make_masks):
        labels = np.array([[0] * 5 + [1, 1, 1, 2, 2], [0] * 5 + [1, 1, 1, 2, 2]])
        bundle = fuse(make_masks(_halves(2, 10)), make_logits(labels, 3, 5.0))
        right = next(d for d in bundle.decisions if d.mask_id == 1)
        assert right.path == "entropy"
        assert right.label == 1

    def test_entropy_and_count_tie_goes_to_lower_label(self, make_logits, make_masks):
        labels = np.array([[0] * 4 + [2, 2, 1, 1], [0] * 4 + [2, 2, 1, 1]])
        bundle = fuse(make_masks(_halves(2, 8)), make_logits(labels, 3, 5.0))
        right = next(d for d in bundle.decisions if d.mask_id == 1)
        assert right.path == "entropy"
        assert right.label == 1

    def test_fixed_theta_skips_levels(self, make_logits, make_masks):
        labels = np.array([[0, 0, 1, 1, 1, 1, 1, 2]])
        masks = make_masks([np.ones((1, 8), dtype=bool)])
        bundle = fuse(masks, make_logits(labels, 3), theta=0.5)
        decision = bundle.decisions[0]
        assert decision.path == "direct_lcr"
        assert decision.level is None
        assert decision.theta == 0.5
        assert bundle.pseudo_map.labels.tolist() == [[1] * 8]

    def test_smaller_mask_paints_over_larger(self, make_logits, make_masks):
        labels = np.array([[0, 0, 0, 1]])
        outer = np.ones((1, 4), dtype=bool)
        inner = np.array([[0, 0, 0, 1]], dtype=bool)
        bundle = fuse(make_masks([outer, inner]), make_logits(labels, 2))
        assert bundle.pseudo_map.labels.tolist() == [[0, 0, 0, 1]]

    def test_uncovered_pixels_keep_ta_argmax_with_low_confidence(self, make_logits, make_masks):
        labels = np.array([[0, 1, 2]])
        bundle = fuse(make_masks([[[1, 0, 0]]]), make_logits(labels, 3))
        assert bundle.pseudo_map.labels.tolist() == [[0, 1, 2]]
        assert bundle.confidence.tolist() == [[1, 0, 0]]

    def test_empty_mask_set(self, make_logits):
        logits = make_logits([[1, 0], [0, 1]], 2)
        bundle = fuse(InstanceMaskSet(ImageDims(2, 2)), logits)
        assert bundle.decisions == []
        assert np.array_equal(bundle.pseudo_map.labels, argmax_labels(logits).labels)
        assert not bundle.confidence.any()

    def test_dimension_mismatch(self, make_logits, make_masks):
        with pytest.raises(DimensionMismatchError):
            fuse(make_masks([np.ones((2, 3))]), make_logits(np.zeros((3, 2), dtype=int), 2))

    def test_high_confidence_map(self, make_logits, make_masks):
        labels = np.array([[0, 1, 1]])
        bundle = fuse(make_masks([[[1, 0, 0]]]), make_logits(labels, 2))
        assert bundle.high_confidence_map.labels.tolist() == [[0, 255, 255]]

    @pytest.mark.parametrize("theta", [None, 0.5])
    def test_matches_brute_force(self, rng, theta):
        empty_sets = 0
        for _ in range(1000):
            masks, logits = _random_instance(rng)
            empty_sets += len(masks) == 0
            bundle = fuse(masks, LogitsMap(logits), theta=theta)

            oracle_bitmaps = [(m.id, decode_rle(m, masks.dims).tolist()) for m in masks]
            labels, confidence, decided = brute_fuse(oracle_bitmaps, logits.tolist(), theta)
            assert bundle.pseudo_map.labels.tolist() == labels
            assert bundle.confidence.tolist() == confidence
            assert {d.mask_id: (d.label, d.path) for d in bundle.decisions} == decided
        assert empty_sets > 0


class TestFuseProperties:
    def test_per_pixel_logit_shift_changes_nothing(self, rng):
        for _ in range(300):
            masks, logits = _random_instance(rng, quarter_steps=True)
            shift = rng.integers(-8, 9, size=logits.shape[:2] + (1,)).astype(np.float32)
            before = fuse(masks, LogitsMap(logits))
            after = fuse(masks, LogitsMap(logits + shift))
            assert np.array_equal(before.pseudo_map.labels, after.pseudo_map.labels)
            assert np.array_equal(before.confidence, after.confidence)
            assert [(d.mask_id, d.label, d.path) for d in before.decisions] == \
                [(d.mask_id, d.label, d.path) for d in after.decisions]

    def test_unanimous_masks_take_the_direct_path(self, rng, make_logits):
        for _ in range(300):
            masks, _ = _random_instance(rng)
            height, width = masks.dims.shape
            labels = rng.integers(0, 4, size=(height, width))
            # keep only the pixels of one TA label inside each mask
            bitmaps = []
            for mask in masks:
                bitmap = decode_rle(mask, masks.dims)
                bitmaps.append(bitmap & (labels == labels[np.unravel_index(np.argmax(bitmap), bitmap.shape)]))
            unanimous = masks_from_bitmaps(bitmaps, masks.dims)
            bundle = fuse(unanimous, make_logits(labels, 4))
            covered = _last_painter(unanimous) >= 0
            assert all(d.path == "direct_lcr" for d in bundle.decisions)
            assert np.array_equal(bundle.pseudo_map.labels[covered], labels[covered])
            assert bundle.confidence[covered].all()
            assert not bundle.confidence[~covered].any()

    @pytest.mark.parametrize("theta", [None, 0.5])
    def test_confidence_comes_from_a_direct_decision(self, rng, theta):
        for _ in range(300):
            masks, logits = _random_instance(rng)
            bundle = fuse(masks, LogitsMap(logits), theta=theta)
            path = {d.mask_id: d.path for d in bundle.decisions}
            painter = _last_painter(masks)
            for r, c in np.argwhere(bundle.confidence == 1):
                assert path[painter[r, c]] == "direct_lcr"

    def test_raising_theta_only_moves_masks_to_entropy(self, rng):
        thetas = (0.2, 0.4, 0.6, 0.8, 1.0)
        for _ in range(200):
            masks, logits = _random_instance(rng)
            previous = None
            for theta in thetas:
                direct = {d.mask_id for d in fuse(masks, LogitsMap(logits), theta=theta).decisions
                          if d.path == "direct_lcr"}
                if previous is not None:
                    assert direct <= previous
                previous = direct
