# src/pipeline/synth.py
"""
Synthetic scene generator

Produces a desk-scale stand-in for one ERP image and the model outputs the
pipeline consumes:
- ground truth: random axis-aligned rectangles of random classes over class 0
- TA logits (two independent passes, horizontal and vertical windows):
  one-hot of the ground truth with uniform label flips, flipped pixels carry a
  smaller margin, everything divided by the temperature
- instance masks: 4-connected components of the ground truth, each
  dilated or eroded by one pixel with probability 1 - fidelity
- student logits: same noise model as the TA with its own flip rate

Output is a pure function of the SynthSpec (numpy default_rng seeded once).
"""
import logging
from typing import List

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from src.storage.bundles import SceneInputs
from src.storage.models import ImageDims, LabelMap, LogitsMap
from src.storage.rle import masks_from_bitmaps

logger = logging.getLogger(__name__)

CORRECT_MARGIN = 2.0
FLIPPED_MARGIN = 1.0


class SynthSpec(BaseModel):
    """Parameters of one synthetic scene"""
    seed: int = 0
    height: int = Field(64, ge=4)
    width: int = Field(128, ge=4)
    num_classes: int = Field(6, ge=2, le=255)
    min_shapes: int = Field(4, ge=0)
    max_shapes: int = Field(10, ge=0)
    noise_rate: float = Field(0.2, ge=0.0, le=1.0)
    temperature: float = Field(1.0, gt=0.0)
    fidelity: float = Field(1.0, ge=0.0, le=1.0)
    student_noise_rate: float = Field(0.3, ge=0.0, le=1.0)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_shape_range(self) -> "SynthSpec":
        if self.max_shapes < self.min_shapes:
            raise ValueError(f"max_shapes ({self.max_shapes}) < min_shapes ({self.min_shapes})")
        return self


def _ground_truth(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    gt = np.zeros((spec.height, spec.width), dtype=np.uint8)
    n_shapes = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    for _ in range(n_shapes):
        cls = int(rng.integers(1, spec.num_classes))
        h = int(rng.integers(max(2, spec.height // 8), max(3, spec.height // 2) + 1))
        w = int(rng.integers(max(2, spec.width // 16), max(3, spec.width // 4) + 1))
        row = int(rng.integers(0, spec.height - h + 1))
        col = int(rng.integers(0, spec.width - w + 1))
        gt[row:row + h, col:col + w] = cls
    return gt


def _noisy_logits(rng: np.random.Generator, gt: np.ndarray, num_classes: int,
                  noise_rate: float, temperature: float) -> LogitsMap:
    flip = rng.random(gt.shape) < noise_rate
    offset = rng.integers(1, num_classes, size=gt.shape)
    noisy = np.where(flip, (gt.astype(np.int64) + offset) % num_classes, gt)
    margin = np.where(flip, FLIPPED_MARGIN, CORRECT_MARGIN)
    one_hot = np.eye(num_classes, dtype=np.float64)[noisy]
    return LogitsMap((one_hot * margin[..., None] / temperature).astype(np.float32))


def _instance_bitmaps(rng: np.random.Generator, gt: np.ndarray, num_classes: int, fidelity: float) -> List[np.ndarray]:
    bitmaps = []
    for cls in range(num_classes):
        components, count = ndimage.label(gt == cls)
        for index in range(1, count + 1):
            bitmap = components == index
            if rng.random() >= fidelity:
                if rng.random() < 0.5:
                    bitmap = ndimage.binary_dilation(bitmap)
                else:
                    eroded = ndimage.binary_erosion(bitmap)
                    bitmap = eroded if eroded.any() else bitmap
            bitmaps.append(bitmap)
    return bitmaps


def generate_scene(spec: SynthSpec) -> SceneInputs:
    """
    Build one synthetic scene

    Example:
        scene = generate_scene(SynthSpec(seed=7, noise_rate=0.2, fidelity=1.0))
        # scene.masks are exactly the ground-truth components
    """
    rng = np.random.default_rng(spec.seed)
    gt = _ground_truth(rng, spec)
    ta_logits = _noisy_logits(rng, gt, spec.num_classes, spec.noise_rate, spec.temperature)
    ta_logits_v = _noisy_logits(rng, gt, spec.num_classes, spec.noise_rate, spec.temperature)
    bitmaps = _instance_bitmaps(rng, gt, spec.num_classes, spec.fidelity)
    student_logits = _noisy_logits(rng, gt, spec.num_classes, spec.student_noise_rate, spec.temperature)

    masks = masks_from_bitmaps(bitmaps, ImageDims(spec.height, spec.width))
    logger.debug(f"Synth seed {spec.seed}: {len(masks)} masks over {spec.height}x{spec.width}")
    return SceneInputs(
        ta_logits=ta_logits,
        masks=masks,
        ta_logits_v=ta_logits_v,
        student_logits=student_logits,
        gt=LabelMap(gt, spec.num_classes),
    )
