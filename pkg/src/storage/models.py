# src/storage/models.py
"""
In-memory containers for everything the toolkit reads and writes.

Array payloads live in frozen dataclasses holding numpy arrays; the shapes
and value ranges are checked on construction so every other module can trust
them.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.exceptions import DimensionMismatchError, LabelRangeError, ValidationError

DEFAULT_IGNORE_LABEL = 255


@dataclass(frozen=True)
class ImageDims:
    """Height and width of an image in pixels"""
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"image dims must be >= 1, got {self.height}x{self.width}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def of(cls, array: np.ndarray) -> "ImageDims":
        return cls(int(array.shape[0]), int(array.shape[1]))


@dataclass(frozen=True)
class LabelMap:
    """Hard per-pixel class indices with an ignore value"""
    labels: np.ndarray
    num_classes: int
    ignore_label: int = DEFAULT_IGNORE_LABEL

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.size and (raw.min() < 0 or raw.max() > 255):
            raise LabelRangeError(f"label values must fit in a byte, got range [{raw.min()}, {raw.max()}]")
        labels = np.ascontiguousarray(raw, dtype=np.uint8)
        if labels.ndim != 2:
            raise ValidationError(f"label map must be 2-D, got shape {labels.shape}")
        if not (1 <= self.num_classes <= 255):
            raise ValidationError(f"num_classes must be in [1, 255], got {self.num_classes}")
        bad = (labels >= self.num_classes) & (labels != self.ignore_label)
        if bad.any():
            value = int(labels[bad][0])
            raise LabelRangeError(f"label {value} >= num_classes {self.num_classes}")
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> ImageDims:
        return ImageDims.of(self.labels)

    @property
    def valid(self) -> np.ndarray:
        return self.labels != self.ignore_label

    def with_labels(self, labels: np.ndarray) -> "LabelMap":
        return LabelMap(labels, self.num_classes, self.ignore_label)


@dataclass(frozen=True)
class LogitsMap:
    """Dense per-pixel class scores, float32 channel-last"""
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 3 or values.shape[2] < 1:
            raise ValidationError(f"logits must be HxWxC with C >= 1, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("logits contain NaN or infinite values")
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> ImageDims:
        return ImageDims.of(self.values)

    @property
    def num_classes(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class distribution (softmax of a LogitsMap)"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValidationError(f"probabilities must be HxWxC, got shape {values.shape}")
        if (values < 0).any() or not np.allclose(values.sum(axis=2), 1.0, atol=1e-6, rtol=0.0):
            raise ValidationError("probabilities must be non-negative and sum to 1 per pixel")
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> ImageDims:
        return ImageDims.of(self.values)

    @property
    def num_classes(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class BoundaryMap:
    """Binary boundary raster"""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValidationError(f"boundary map must be 2-D, got shape {bits.shape}")
        if bits.dtype != np.bool_ and not np.isin(bits, (0, 1)).all():
            raise ValidationError("boundary map values must be 0 or 1")
        object.__setattr__(self, "bits", np.ascontiguousarray(bits, dtype=np.uint8))

    @property
    def dims(self) -> ImageDims:
        return ImageDims.of(self.bits)

    @property
    def mask(self) -> np.ndarray:
        return self.bits.astype(bool)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def empty(cls, dims: ImageDims) -> "BoundaryMap":
        return cls(np.zeros(dims.shape, dtype=np.uint8))


@dataclass(frozen=True)
class InstanceMask:
    """Class-agnostic binary mask as uncompressed column-major RLE"""
    id: int
    counts: Tuple[int, ...]
    area: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValidationError(f"mask {self.id}: negative run length")
        object.__setattr__(self, "counts", counts)
        ones = sum(counts[1::2])
        if ones != self.area:
            raise ValidationError(f"mask {self.id}: area {self.area} != one-run total {ones}")


@dataclass(frozen=True)
class InstanceMaskSet:
    """All instance masks for one image; masks may overlap"""
    dims: ImageDims
    masks: List[InstanceMask] = field(default_factory=list)

    def __post_init__(self):
        ids = [m.id for m in self.masks]
        if len(ids) != len(set(ids)):
            raise ValidationError("instance mask ids must be unique")
        total = self.dims.height * self.dims.width
        for m in self.masks:
            if m.area <= 0:
                raise ValidationError(f"mask {m.id}: area must be > 0")
            if sum(m.counts) != total:
                raise DimensionMismatchError(
                    f"mask {m.id}: run lengths sum to {sum(m.counts)}, image has {total} pixels"
                )

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)
