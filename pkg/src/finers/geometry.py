"""Coordinate frames, boxes, points and the transform chain between them.

Three frames exist: the original image, the downscaled input the global
exploration stage sees, and the fixed-size crop the local refinement stage
sees. Every value object carries its frame; mixing frames raises instead of
silently producing garbage coordinates.

Boxes use a half-open pixel convention: pixel (i, j) lies inside a box iff
x_min <= i < x_max and y_min <= j < y_max, so area = width * height agrees
exactly with integer lattice counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, TypeVar, Union


class GeometryError(ValueError):
    """Base class for geometry contract violations."""


class FrameMismatch(GeometryError):
    """Operands live in different coordinate frames."""


class DegenerateGeometry(GeometryError):
    """A box collapsed to zero area, typically after clamping."""


class RegionTooLarge(GeometryError):
    """A fixed-size region cannot fit inside the target frame."""


class FrameTag(str, Enum):
    ORIGINAL = "original"
    GSE_INPUT = "gse_input"
    CROP = "crop"


@dataclass(frozen=True)
class Frame:
    """A pixel coordinate system of a given size."""

    width: int
    height: int
    tag: FrameTag = FrameTag.ORIGINAL

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise GeometryError(
                f"frame dimensions must be >= 1, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    frame: Frame

    def __post_init__(self) -> None:
        if not (0 <= self.x < self.frame.width and 0 <= self.y < self.frame.height):
            raise GeometryError(
                f"point ({self.x}, {self.y}) outside frame "
                f"{self.frame.width}x{self.frame.height}"
            )

    def to_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle, half-open on both axes."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    frame: Frame

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if not (
            0 <= self.x_min
            and self.x_max <= self.frame.width
            and 0 <= self.y_min
            and self.y_max <= self.frame.height
        ):
            raise GeometryError(
                f"box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max}) "
                f"outside frame {self.frame.width}x{self.frame.height}"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def center(self) -> Point:
        cx = min(max((self.x_min + self.x_max) / 2.0, 0.0), self.frame.width - 1)
        cy = min(max((self.y_min + self.y_max) / 2.0, 0.0), self.frame.height - 1)
        return Point(cx, cy, self.frame)

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class RegionBox(BBox):
    """A square box of exact, fixed side length."""

    fixed_side: int = 0

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.fixed_side <= 0:
            raise GeometryError(f"fixed_side must be positive, got {self.fixed_side}")
        if self.width != self.fixed_side or self.height != self.fixed_side:
            raise GeometryError(
                f"region sides ({self.width}, {self.height}) differ from "
                f"fixed side {self.fixed_side}"
            )


Geometric = Union[BBox, Point, RegionBox]
G = TypeVar("G", bound=Geometric)


def _require_same_frame(a: Geometric, b: Geometric) -> None:
    if a.frame != b.frame:
        raise FrameMismatch(f"frames differ: {a.frame} vs {b.frame}")


def round_half_up(x: float) -> int:
    """Round to nearest integer with .5 going up (not banker's rounding)."""
    return math.floor(x + 0.5)


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes in the same frame, 0 when disjoint."""
    _require_same_frame(a, b)
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def box_l1(a: BBox, b: BBox, reduction: str = "mean") -> float:
    """L1 distance between two boxes over the four corner coordinates.

    The default reduces by mean so the result stays on the same pixel scale
    as a point distance; reduction="sum" gives the plain coordinate sum.
    """
    _require_same_frame(a, b)
    total = (
        abs(a.x_min - b.x_min)
        + abs(a.y_min - b.y_min)
        + abs(a.x_max - b.x_max)
        + abs(a.y_max - b.y_max)
    )
    if reduction == "mean":
        return total / 4.0
    if reduction == "sum":
        return total
    raise ValueError(f"unknown reduction {reduction!r}")


def point_l1(a: Point, b: Point) -> float:
    _require_same_frame(a, b)
    return abs(a.x - b.x) + abs(a.y - b.y)


def contains(region: BBox, inner: BBox) -> bool:
    """True iff `inner` lies fully inside `region` (closed bounds)."""
    _require_same_frame(region, inner)
    return (
        region.x_min <= inner.x_min
        and inner.x_max <= region.x_max
        and region.y_min <= inner.y_min
        and inner.y_max <= region.y_max
    )


def fit_scale(original: Frame, target: Frame) -> float:
    """Uniform scale that fits `original` inside `target`, top-left anchored."""
    return min(target.width / original.width, target.height / original.height)


def clamp_point(x: float, y: float, frame: Frame) -> Point:
    """Clamp raw coordinates into the frame's valid pixel range."""
    cx = min(max(float(x), 0.0), frame.width - 1)
    cy = min(max(float(y), 0.0), frame.height - 1)
    return Point(cx, cy, frame)


def clamp_box(
    x_min: float, y_min: float, x_max: float, y_max: float, frame: Frame
) -> BBox:
    """Clamp raw box coordinates into frame bounds.

    Raises DegenerateGeometry when clamping collapses the box to zero area.
    """
    cx_min = min(max(float(x_min), 0.0), float(frame.width))
    cx_max = min(max(float(x_max), 0.0), float(frame.width))
    cy_min = min(max(float(y_min), 0.0), float(frame.height))
    cy_max = min(max(float(y_max), 0.0), float(frame.height))
    if cx_min >= cx_max or cy_min >= cy_max:
        raise DegenerateGeometry(
            f"box ({x_min}, {y_min}, {x_max}, {y_max}) degenerate after clamping "
            f"to {frame.width}x{frame.height}"
        )
    return BBox(cx_min, cy_min, cx_max, cy_max, frame)


def clamp_region(center: Point, side: int, frame: Frame) -> RegionBox:
    """Square region of exactly `side`, centered when possible.

    Near borders the square is translated just enough to stay in-frame; it is
    never shrunk. The origin is rounded half-up to the pixel grid.
    """
    if center.frame != frame:
        raise FrameMismatch(f"center frame {center.frame} differs from {frame}")
    if side > frame.width or side > frame.height:
        raise RegionTooLarge(
            f"side {side} exceeds frame {frame.width}x{frame.height}"
        )
    ox = round_half_up(center.x - side / 2.0)
    oy = round_half_up(center.y - side / 2.0)
    ox = min(max(ox, 0), frame.width - side)
    oy = min(max(oy, 0), frame.height - side)
    return RegionBox(float(ox), float(oy), float(ox + side), float(oy + side), frame, side)


def _shift_region_into_frame(
    ox: float, oy: float, side: int, frame: Frame
) -> RegionBox:
    # Region origins live on the integer pixel grid so that the exact-side
    # invariant survives float arithmetic.
    if side > frame.width or side > frame.height:
        raise RegionTooLarge(f"side {side} exceeds frame {frame.width}x{frame.height}")
    ix = min(max(round_half_up(ox), 0), frame.width - side)
    iy = min(max(round_half_up(oy), 0), frame.height - side)
    return RegionBox(float(ix), float(iy), float(ix + side), float(iy + side), frame, side)


def _scale_geom(x: Geometric, s: float, dst: Frame) -> Geometric:
    if isinstance(x, RegionBox):
        side = round_half_up(x.fixed_side * s)
        if side < 1:
            raise DegenerateGeometry(f"region side {x.fixed_side} vanished at scale {s}")
        return _shift_region_into_frame(x.x_min * s, x.y_min * s, side, dst)
    if isinstance(x, BBox):
        return clamp_box(x.x_min * s, x.y_min * s, x.x_max * s, x.y_max * s, dst)
    return clamp_point(x.x * s, x.y * s, dst)


def _translate_geom(x: Geometric, dx: float, dy: float, dst: Frame) -> Geometric:
    if isinstance(x, RegionBox):
        return _shift_region_into_frame(x.x_min + dx, x.y_min + dy, x.fixed_side, dst)
    if isinstance(x, BBox):
        return clamp_box(x.x_min + dx, x.y_min + dy, x.x_max + dx, x.y_max + dy, dst)
    return clamp_point(x.x + dx, x.y + dy, dst)


def to_frame(
    x: G,
    src: Frame,
    dst: Frame,
    crop_origin: Optional[Point] = None,
) -> G:
    """Map a box, point or region from `src` to `dst` coordinates.

    Original <-> exploration input is a uniform min-scale fit (aspect
    preserving, top-left anchored, no padding). Original <-> crop is a pure
    translation by `crop_origin`, which must be a point in the original
    frame. Exploration input <-> crop composes through the original frame
    carried by `crop_origin`. Results are clamped to `dst` bounds; the
    transform is invertible up to that clamping.
    """
    if x.frame != src:
        raise FrameMismatch(f"value frame {x.frame} differs from declared src {src}")
    if src == dst:
        return x

    pair = (src.tag, dst.tag)
    if pair == (FrameTag.ORIGINAL, FrameTag.GSE_INPUT):
        return _scale_geom(x, fit_scale(src, dst), dst)
    if pair == (FrameTag.GSE_INPUT, FrameTag.ORIGINAL):
        return _scale_geom(x, 1.0 / fit_scale(dst, src), dst)

    if FrameTag.CROP in pair:
        if crop_origin is None:
            raise GeometryError("crop transforms require crop_origin")
        if crop_origin.frame.tag != FrameTag.ORIGINAL:
            raise FrameMismatch("crop_origin must be a point in the original frame")
        original = crop_origin.frame
        if pair == (FrameTag.ORIGINAL, FrameTag.CROP):
            return _translate_geom(x, -crop_origin.x, -crop_origin.y, dst)
        if pair == (FrameTag.CROP, FrameTag.ORIGINAL):
            return _translate_geom(x, crop_origin.x, crop_origin.y, dst)
        if pair == (FrameTag.GSE_INPUT, FrameTag.CROP):
            mid = to_frame(x, src, original)
            return to_frame(mid, original, dst, crop_origin)
        if pair == (FrameTag.CROP, FrameTag.GSE_INPUT):
            mid = to_frame(x, src, original, crop_origin)
            return to_frame(mid, original, dst)

    raise GeometryError(f"unsupported frame pair {src.tag.value} -> {dst.tag.value}")
