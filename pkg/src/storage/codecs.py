# src/storage/codecs.py
"""
Binary file formats for label maps, logits and boundary maps

All formats are little-endian with a 4-byte magic:
- label    "PLBL" u32 H, u32 W, u8 ignore_label, u8 C, H*W uint8 row-major
- logits   "PLGT" u32 H, u32 W, u32 C, H*W*C float32 row-major channel-last
- boundary "PLBD" u32 H, u32 W, H*W uint8 in {0, 1}

Every reader accepts a path or a binary stream, every writer likewise.
"""
import logging
import struct
from contextlib import contextmanager
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from src.exceptions import FormatError, LabelRangeError, MissingInputError, TruncationError, ValidationError
from src.storage.models import BoundaryMap, LabelMap, LogitsMap, ProbMap

logger = logging.getLogger(__name__)

PathOrStream = Union[str, Path, BinaryIO]

LABEL_MAGIC = b"PLBL"
LOGITS_MAGIC = b"PLGT"
BOUNDARY_MAGIC = b"PLBD"

_LABEL_HEADER = struct.Struct("<4sIIBB")
_LOGITS_HEADER = struct.Struct("<4sIII")
_BOUNDARY_HEADER = struct.Struct("<4sII")


@contextmanager
def _open(target: PathOrStream, mode: str):
    if isinstance(target, (str, Path)):
        path = Path(target)
        if "r" in mode and not path.exists():
            raise MissingInputError(f"file not found: {path}")
        with open(path, mode) as f:
            yield f
    else:
        yield target


def _read_header(stream: BinaryIO, header: struct.Struct, magic: bytes, name: str) -> tuple:
    raw = stream.read(header.size)
    if len(raw) < 4 or raw[:4] != magic:
        raise FormatError(f"not a {name} file: expected magic {magic!r}, got {raw[:4]!r}")
    if len(raw) < header.size:
        raise TruncationError(f"{name} header truncated ({len(raw)} of {header.size} bytes)")
    return header.unpack(raw)[1:]


def _read_payload(stream: BinaryIO, nbytes: int, name: str) -> bytes:
    payload = stream.read(nbytes)
    if len(payload) < nbytes:
        raise TruncationError(f"{name} payload truncated: header declares {nbytes} bytes, found {len(payload)}")
    return payload


def _check_dims(height: int, width: int, name: str) -> None:
    if height < 1 or width < 1:
        raise FormatError(f"{name} header declares empty image {height}x{width}")


# ---------------------------------------------------------------------------
# Label maps
# ---------------------------------------------------------------------------

def write_label(target: PathOrStream, label_map: LabelMap) -> None:
    h, w = label_map.labels.shape
    with _open(target, "wb") as f:
        f.write(_LABEL_HEADER.pack(LABEL_MAGIC, h, w, label_map.ignore_label, label_map.num_classes))
        f.write(label_map.labels.tobytes(order="C"))


def read_label(target: PathOrStream) -> LabelMap:
    with _open(target, "rb") as f:
        h, w, ignore_label, num_classes = _read_header(f, _LABEL_HEADER, LABEL_MAGIC, "label")
        _check_dims(h, w, "label")
        if num_classes == 0:
            raise FormatError("label header declares C = 0")
        payload = _read_payload(f, h * w, "label")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
    try:
        return LabelMap(labels, num_classes, ignore_label)
    except LabelRangeError as e:
        raise LabelRangeError(f"label file: {e}") from e


# ---------------------------------------------------------------------------
# Logits
# ---------------------------------------------------------------------------

def write_logits(target: PathOrStream, logits: LogitsMap) -> None:
    h, w, c = logits.values.shape
    with _open(target, "wb") as f:
        f.write(_LOGITS_HEADER.pack(LOGITS_MAGIC, h, w, c))
        f.write(logits.values.astype("<f4", copy=False).tobytes(order="C"))


def read_logits(target: PathOrStream) -> LogitsMap:
    with _open(target, "rb") as f:
        h, w, c = _read_header(f, _LOGITS_HEADER, LOGITS_MAGIC, "logits")
        _check_dims(h, w, "logits")
        if c == 0:
            raise FormatError("logits header declares C = 0")
        payload = _read_payload(f, h * w * c * 4, "logits")
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
    if not np.isfinite(values).all():
        raise ValidationError("logits payload contains NaN or infinite values")
    return LogitsMap(values)


# ---------------------------------------------------------------------------
# Boundary maps
# ---------------------------------------------------------------------------

def write_boundary(target: PathOrStream, boundary: BoundaryMap) -> None:
    h, w = boundary.bits.shape
    with _open(target, "wb") as f:
        f.write(_BOUNDARY_HEADER.pack(BOUNDARY_MAGIC, h, w))
        f.write(boundary.bits.tobytes(order="C"))


def read_boundary(target: PathOrStream) -> BoundaryMap:
    with _open(target, "rb") as f:
        h, w = _read_header(f, _BOUNDARY_HEADER, BOUNDARY_MAGIC, "boundary")
        _check_dims(h, w, "boundary")
        payload = _read_payload(f, h * w, "boundary")
    bits = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
    if (bits > 1).any():
        raise ValidationError("boundary payload holds values other than 0 and 1")
    return BoundaryMap(bits)


# ---------------------------------------------------------------------------
# Derived maps
# ---------------------------------------------------------------------------

def softmax(logits: LogitsMap) -> ProbMap:
    """Numerically stable per-pixel softmax (max-subtracted, float64)"""
    values = logits.values.astype(np.float64)
    shifted = values - values.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    return ProbMap(exp / exp.sum(axis=2, keepdims=True))


def argmax_labels(logits: LogitsMap, ignore_label: int = 255) -> LabelMap:
    """Hard prediction map; ties resolve to the lowest class index"""
    labels = np.argmax(logits.values, axis=2).astype(np.uint8)
    return LabelMap(labels, logits.num_classes, ignore_label)
