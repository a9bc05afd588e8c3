"""Shared fixtures and builders for the test suite"""
import numpy as np
import pytest

from src.storage.models import ImageDims, LabelMap, LogitsMap, ProbMap
from src.storage.rle import masks_from_bitmaps


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def make_label_map():
    def build(rows, num_classes=None, ignore_label=255):
        labels = np.asarray(rows, dtype=np.uint8)
        if num_classes is None:
            valid = labels[labels != ignore_label]
            num_classes = int(valid.max()) + 1 if valid.size else 1
        return LabelMap(labels, num_classes, ignore_label)
    return build


@pytest.fixture
def make_logits():
    """One-hot logits scaled by a margin (scalar or per-pixel array)"""
    def build(labels, num_classes, margin=5.0):
        labels = np.asarray(labels, dtype=np.int64)
        one_hot = np.eye(num_classes, dtype=np.float64)[labels]
        margin = np.broadcast_to(np.asarray(margin, dtype=np.float64), labels.shape)
        return LogitsMap((one_hot * margin[..., None]).astype(np.float32))
    return build


@pytest.fixture
def make_probs():
    def build(rows):
        return ProbMap(np.asarray(rows, dtype=np.float64))
    return build


@pytest.fixture
def make_masks():
    """Instance mask set from a list of 2-D boolean bitmaps (ids 0..n-1)"""
    def build(bitmaps, dims=None):
        bitmaps = [np.asarray(b, dtype=bool) for b in bitmaps]
        if dims is None:
            dims = ImageDims(*bitmaps[0].shape)
        return masks_from_bitmaps(bitmaps, dims)
    return build
