# src/tools/window_tools.py
"""
Window Tools - Sliding-window geometry over ERP panoramas

This module handles:
1. Planning horizontal (W_i) and vertical (W_j) windows with stride = window size
2. Computing the overlap rectangle O_ij of every (horizontal, vertical) pair
3. Cropping maps to a window and stitching per-window maps back together

When a window size does not divide the image, the final window in that row or
column is clamped flush to the image edge, so it overlaps its neighbour.
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from src.exceptions import CoverageError, WindowSizeError
from src.storage.models import BoundaryMap, ImageDims, LabelMap, LogitsMap, ProbMap

logger = logging.getLogger(__name__)

AnyMap = Union[LabelMap, LogitsMap, ProbMap, BoundaryMap, np.ndarray]


class Window(BaseModel):
    """One sliding-window placement"""
    id: int
    orientation: Literal["horizontal", "vertical"]
    origin_row: int
    origin_col: int
    height: int
    width: int

    model_config = {"frozen": True}

    @property
    def rect(self) -> Tuple[int, int, int, int]:
        return (self.origin_row, self.origin_col, self.height, self.width)

    @property
    def slices(self) -> Tuple[slice, slice]:
        return (
            slice(self.origin_row, self.origin_row + self.height),
            slice(self.origin_col, self.origin_col + self.width),
        )


class OverlapRegion(BaseModel):
    """Intersection O_ij of horizontal window i and vertical window j"""
    horiz_id: int
    vert_id: int
    rect: Tuple[int, int, int, int]

    model_config = {"frozen": True}

    def as_window(self) -> Window:
        row0, col0, height, width = self.rect
        # orientation is irrelevant for cropping; the region behaves like a window
        return Window(
            id=self.horiz_id, orientation="horizontal",
            origin_row=row0, origin_col=col0, height=height, width=width,
        )


class WindowPlan(BaseModel):
    dims: Tuple[int, int]
    horizontal: List[Window]
    vertical: List[Window]

    model_config = {"frozen": True}

    @property
    def image_dims(self) -> ImageDims:
        return ImageDims(*self.dims)


def _axis_origins(extent: int, size: int) -> List[int]:
    """Origins along one axis with stride = size, last one clamped to the edge"""
    origins = list(range(0, extent - size + 1, size))
    if origins[-1] + size < extent:
        origins.append(extent - size)
    return origins


def _tile(dims: ImageDims, size: Tuple[int, int], orientation: str) -> List[Window]:
    height, width = size
    if height < 1 or width < 1:
        raise WindowSizeError(f"{orientation} window size must be positive, got {height}x{width}")
    if height > dims.height or width > dims.width:
        raise WindowSizeError(
            f"{orientation} window {height}x{width} is larger than image {dims.height}x{dims.width}"
        )
    windows = []
    for row in _axis_origins(dims.height, height):
        for col in _axis_origins(dims.width, width):
            windows.append(Window(
                id=len(windows), orientation=orientation,
                origin_row=row, origin_col=col, height=height, width=width,
            ))
    return windows


def plan_windows(dims: ImageDims, h_size: Tuple[int, int], v_size: Tuple[int, int]) -> WindowPlan:
    """
    Plan horizontal and vertical windows over an image

    Args:
        dims: image height and width
        h_size: (height, width) of the horizontal windows W_i
        v_size: (height, width) of the vertical windows W_j

    Returns:
        WindowPlan with windows in row-major order, ids 0..n-1 per orientation

    Example:
        plan_windows(ImageDims(400, 2048), (400, 256), (200, 512))
        # 8 horizontal windows in one row, 8 vertical windows (2 rows x 4 cols)
    """
    plan = WindowPlan(
        dims=dims.shape,
        horizontal=_tile(dims, tuple(h_size), "horizontal"),
        vertical=_tile(dims, tuple(v_size), "vertical"),
    )
    logger.debug(f"Planned {len(plan.horizontal)} horizontal + {len(plan.vertical)} vertical windows")
    return plan


def intersect(a: Window, b: Window) -> Optional[Tuple[int, int, int, int]]:
    """Rectangle (row0, col0, height, width) shared by two windows, None if empty"""
    row0 = max(a.origin_row, b.origin_row)
    row1 = min(a.origin_row + a.height, b.origin_row + b.height)
    col0 = max(a.origin_col, b.origin_col)
    col1 = min(a.origin_col + a.width, b.origin_col + b.width)
    if row1 <= row0 or col1 <= col0:
        return None
    return (row0, col0, row1 - row0, col1 - col0)


def overlap_regions(plan: WindowPlan) -> List[OverlapRegion]:
    """All non-empty O_ij, ordered by horizontal id then vertical id"""
    regions = []
    for h in plan.horizontal:
        for v in plan.vertical:
            rect = intersect(h, v)
            if rect is not None:
                regions.append(OverlapRegion(horiz_id=h.id, vert_id=v.id, rect=rect))
    return regions


def _array_of(source: AnyMap) -> np.ndarray:
    if isinstance(source, LabelMap):
        return source.labels
    if isinstance(source, (LogitsMap, ProbMap)):
        return source.values
    if isinstance(source, BoundaryMap):
        return source.bits
    return np.asarray(source)


def _rewrap(source: AnyMap, array: np.ndarray) -> AnyMap:
    if isinstance(source, LabelMap):
        return LabelMap(array, source.num_classes, source.ignore_label)
    if isinstance(source, LogitsMap):
        return LogitsMap(array)
    if isinstance(source, ProbMap):
        return ProbMap(array)
    if isinstance(source, BoundaryMap):
        return BoundaryMap(array)
    return array


def _check_inside(window: Window, shape: Sequence[int]) -> None:
    if (window.origin_row < 0 or window.origin_col < 0
            or window.origin_row + window.height > shape[0]
            or window.origin_col + window.width > shape[1]):
        raise WindowSizeError(
            f"window {window.rect} falls outside map of size {shape[0]}x{shape[1]}"
        )


def crop(source: AnyMap, window: Window) -> AnyMap:
    """Restrict a map to a window's rectangle (same kind of map back)"""
    array = _array_of(source)
    _check_inside(window, array.shape)
    return _rewrap(source, array[window.slices].copy())


def embed(patch: AnyMap, window: Window, into: np.ndarray) -> np.ndarray:
    """Write a cropped patch back into a whole-image array at the window origin"""
    _check_inside(window, into.shape)
    into[window.slices] = _array_of(patch)
    return into


def stitch(per_window: Sequence[Tuple[Window, AnyMap]], dims: ImageDims) -> AnyMap:
    """
    Reassemble per-window maps into one whole-image map

    Label / boundary maps: the later window in list order wins where windows overlap.
    Logits / probability maps: overlapping pixels take the per-pixel mean.

    Raises:
        CoverageError if any pixel is covered by no window
    """
    if not per_window:
        raise CoverageError("nothing to stitch")
    first = per_window[0][1]
    first_array = _array_of(first)
    averaged = isinstance(first, (LogitsMap, ProbMap)) or (
        isinstance(first, np.ndarray) and first.dtype.kind == "f"
    )
    shape = dims.shape + first_array.shape[2:]
    visits = np.zeros(dims.shape, dtype=np.int64)

    if averaged:
        total = np.zeros(shape, dtype=np.float64)
        for window, patch in per_window:
            _check_inside(window, dims.shape)
            total[window.slices] += _array_of(patch)
            visits[window.slices] += 1
    else:
        total = np.zeros(shape, dtype=first_array.dtype)
        for window, patch in per_window:
            embed(patch, window, total)
            visits[window.slices] += 1

    if (visits == 0).any():
        row, col = np.argwhere(visits == 0)[0]
        raise CoverageError(f"pixel ({row}, {col}) is not covered by any window")

    if averaged:
        total = total / (visits if total.ndim == 2 else visits[..., None])
        if isinstance(first, LogitsMap):
            total = total.astype(np.float32)
    return _rewrap(first, total)
