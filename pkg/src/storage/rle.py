# src/storage/rle.py
"""
Uncompressed COCO-style run-length encoding for instance masks.

Runs are taken over the mask in column-major order and alternate
zero-run, one-run, zero-run, ...; the first run is always a zero-run and may
be 0 when the first pixel is set.

Mask sets are stored as JSON:
    {"height": H, "width": W, "masks": [{"id": 0, "area": 12, "rle": [...]}, ...]}
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from src.exceptions import DimensionMismatchError, FormatError, MissingInputError, ValidationError
from src.storage.models import ImageDims, InstanceMask, InstanceMaskSet

logger = logging.getLogger(__name__)


def rle_counts(bitmap: np.ndarray) -> List[int]:
    """Column-major run lengths of a binary bitmap, zero-run first"""
    flat = np.asarray(bitmap, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return [0]
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def encode_rle(bitmap: np.ndarray, mask_id: int = 0) -> InstanceMask:
    bitmap = np.asarray(bitmap, dtype=bool)
    if bitmap.ndim != 2:
        raise ValidationError(f"bitmap must be 2-D, got shape {bitmap.shape}")
    return InstanceMask(id=mask_id, counts=tuple(rle_counts(bitmap)), area=int(bitmap.sum()))


def decode_rle(mask: InstanceMask, dims: ImageDims) -> np.ndarray:
    """Bitmap (H x W bool) of a run-length encoded mask"""
    total = dims.height * dims.width
    counts = np.asarray(mask.counts, dtype=np.int64)
    if int(counts.sum()) != total:
        raise ValidationError(
            f"mask {mask.id}: run lengths sum to {int(counts.sum())}, expected {total}"
        )
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((dims.height, dims.width), order="F")


def decode_all(masks: InstanceMaskSet) -> np.ndarray:
    """Stack of bitmaps, shape (N, H, W), in mask order"""
    if not len(masks):
        return np.zeros((0,) + masks.dims.shape, dtype=bool)
    return np.stack([decode_rle(m, masks.dims) for m in masks])


def masks_from_bitmaps(bitmaps: Iterable[np.ndarray], dims: ImageDims, ids: Iterable[int] = None) -> InstanceMaskSet:
    """Encode bitmaps into a mask set, dropping empty ones"""
    bitmaps = list(bitmaps)
    ids = list(ids) if ids is not None else list(range(len(bitmaps)))
    masks = [encode_rle(b, i) for b, i in zip(bitmaps, ids) if np.any(b)]
    return InstanceMaskSet(dims, masks)


# ---------------------------------------------------------------------------
# JSON files
# ---------------------------------------------------------------------------

def masks_to_dict(masks: InstanceMaskSet) -> dict:
    return {
        "height": masks.dims.height,
        "width": masks.dims.width,
        "masks": [{"id": m.id, "area": m.area, "rle": list(m.counts)} for m in masks],
    }


def _json_int(value, field: str) -> int:
    """Integral JSON number; 3.0 is accepted, 1.5, true and "3" are not"""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"instance mask JSON: {field} must be an integer, got {value!r}")
    if isinstance(value, float) and not value.is_integer():
        raise FormatError(f"instance mask JSON: {field} must be an integer, got {value!r}")
    return int(value)


def masks_from_dict(data: dict) -> InstanceMaskSet:
    try:
        dims = ImageDims(_json_int(data["height"], "height"), _json_int(data["width"], "width"))
        masks = [
            InstanceMask(
                id=_json_int(m["id"], "id"),
                counts=tuple(_json_int(c, f"rle of mask {m['id']}") for c in m["rle"]),
                area=_json_int(m["area"], "area"),
            )
            for m in data["masks"]
        ]
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed instance mask JSON: {e}") from e
    except ValidationError as e:
        raise FormatError(f"invalid instance mask JSON: {e}") from e
    try:
        return InstanceMaskSet(dims, masks)
    except (ValidationError, DimensionMismatchError) as e:
        raise FormatError(f"invalid instance mask JSON: {e}") from e


def write_masks(path: Union[str, Path], masks: InstanceMaskSet) -> None:
    Path(path).write_text(json.dumps(masks_to_dict(masks), sort_keys=True))


def read_masks(path: Union[str, Path]) -> InstanceMaskSet:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{p} is not valid JSON: {e}") from e
    masks = masks_from_dict(data)
    logger.debug(f"Loaded {len(masks)} instance masks from {p}")
    return masks
