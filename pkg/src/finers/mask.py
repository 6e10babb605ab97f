"""Binary segmentation masks, run-length encoding and mask primitives.

Masks are stored as read-only boolean arrays in row-major order. The RLE
scheme alternates background and foreground run lengths, always starting
with a background run (possibly zero); it is bit-exact and canonical, i.e.
every mask has exactly one encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    BBox,
    DegenerateGeometry,
    Frame,
    FrameTag,
    Point,
    round_half_up,
)


class MaskError(ValueError):
    """Base class for mask contract violations."""


class CorruptRle(MaskError):
    """RLE counts are inconsistent with the declared mask size."""


class EmptyMask(MaskError):
    """An operation requires at least one foreground pixel."""


class DimensionMismatch(MaskError):
    """Masks of different sizes were combined."""


@dataclass(frozen=True)
class BinaryMask:
    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width), read-only

    def __post_init__(self) -> None:
        if self.bits.dtype != np.bool_ or self.bits.shape != (self.height, self.width):
            raise MaskError(
                f"bits must be bool of shape ({self.height}, {self.width}), "
                f"got {self.bits.dtype} {self.bits.shape}"
            )
        self.bits.setflags(write=False)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BinaryMask":
        a = np.ascontiguousarray(arr, dtype=np.bool_)
        return cls(width=a.shape[1], height=a.shape[0], bits=a)

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls.from_array(np.zeros((height, width), dtype=np.bool_))

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


@dataclass(frozen=True)
class MaskRle:
    """Canonical alternating-run encoding of a binary mask."""

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.counts:
            raise CorruptRle("counts must be non-empty")
        for i, c in enumerate(self.counts):
            if not isinstance(c, int) or c < 0:
                raise CorruptRle(f"count {c!r} at index {i} is not a non-negative int")
            if c == 0 and i != 0:
                raise CorruptRle(f"zero run at index {i}; only a leading zero is allowed")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise CorruptRle(
                f"counts sum {total} != {self.width}x{self.height}"
            )

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def to_json_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "counts": list(self.counts)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MaskRle":
        try:
            width = int(d["width"])
            height = int(d["height"])
            counts = tuple(int(c) for c in d["counts"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRle(f"malformed RLE payload: {exc}") from exc
        return cls(width=width, height=height, counts=counts)


def rle_encode(m: BinaryMask) -> MaskRle:
    """Lossless canonical encoding; the first run is always background."""
    flat = m.bits.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], changes))
    ends = np.concatenate((changes, [flat.size]))
    lengths = (ends - starts).tolist()
    if bool(flat[0]):
        lengths.insert(0, 0)
    return MaskRle(width=m.width, height=m.height, counts=tuple(int(v) for v in lengths))


def rle_decode(r: MaskRle) -> BinaryMask:
    values = np.zeros(len(r.counts), dtype=np.bool_)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(r.counts, dtype=np.int64))
    return BinaryMask.from_array(flat.reshape(r.height, r.width))


def mask_intersection_union(a: BinaryMask, b: BinaryMask) -> tuple[int, int]:
    """Exact foreground set-cardinality counts (intersection, union)."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"mask dims {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    return inter, union


def rasterize_box(b: BBox) -> BinaryMask:
    """Mask whose set bits are exactly the half-open box lattice.

    Coordinates are rounded half-up to the pixel grid first.
    """
    x0 = max(round_half_up(b.x_min), 0)
    y0 = max(round_half_up(b.y_min), 0)
    x1 = min(round_half_up(b.x_max), b.frame.width)
    y1 = min(round_half_up(b.y_max), b.frame.height)
    if x0 >= x1 or y0 >= y1:
        raise DegenerateGeometry(f"box {b.to_list()} rasterizes to zero area")
    bits = np.zeros((b.frame.height, b.frame.width), dtype=np.bool_)
    bits[y0:y1, x0:x1] = True
    return BinaryMask.from_array(bits)


def _fg_window(bits: np.ndarray) -> tuple[int, int, int, int]:
    """Half-open (x0, y0, x1, y1) bounds of the foreground, without
    materialising index arrays; masks are huge and mostly background."""
    row_any = bits.any(axis=1)
    col_any = bits.any(axis=0)
    if not row_any.any():
        raise EmptyMask("mask has no foreground")
    y0 = int(np.argmax(row_any))
    y1 = int(len(row_any) - np.argmax(row_any[::-1]))
    x0 = int(np.argmax(col_any))
    x1 = int(len(col_any) - np.argmax(col_any[::-1]))
    return x0, y0, x1, y1


def mask_centroid(m: BinaryMask) -> tuple[float, float]:
    """(x, y) mean of the foreground pixel coordinates."""
    x0, y0, x1, y1 = _fg_window(m.bits)
    rows, cols = np.nonzero(m.bits[y0:y1, x0:x1])
    return float(cols.mean() + x0), float(rows.mean() + y0)


def gt_box_from_mask(m: BinaryMask, frame: Optional[Frame] = None) -> BBox:
    """Tight half-open bounding box of the foreground pixels."""
    x0, y0, x1, y1 = _fg_window(m.bits)
    if frame is None:
        frame = Frame(m.width, m.height, FrameTag.ORIGINAL)
    return BBox(float(x0), float(y0), float(x1), float(y1), frame)


def _l1_depth(bits: np.ndarray) -> np.ndarray:
    """Exact 4-connected distance to the nearest background pixel.

    Everything outside the image counts as background. Classic two-pass
    city-block distance transform; the per-row scans use the
    min-accumulate-minus-index trick to stay vectorised.
    """
    h, w = bits.shape
    big = h + w + 2
    d = np.full((h + 2, w + 2), big, dtype=np.int64)
    d[1:-1, 1:-1] = np.where(bits, big, 0)
    d[0, :] = 0
    d[-1, :] = 0
    d[:, 0] = 0
    d[:, -1] = 0

    idx = np.arange(w + 2, dtype=np.int64)
    for i in range(1, h + 2):
        np.minimum(d[i], d[i - 1] + 1, out=d[i])
        d[i] = np.minimum.accumulate(d[i] - idx) + idx
    for i in range(h, -1, -1):
        np.minimum(d[i], d[i + 1] + 1, out=d[i])
        rev = d[i][::-1]
        d[i] = (np.minimum.accumulate(rev - idx) + idx)[::-1]
    return d[1:-1, 1:-1]


def derive_gt_points(m: BinaryMask, frame: Optional[Frame] = None) -> tuple[Point, Point]:
    """Two deterministic supervision points from a foreground mask.

    The first is the foreground pixel L1-nearest to the foreground centroid;
    the second is the deepest-interior pixel (maximum 4-connected distance to
    background, with out-of-frame treated as background). Ties break towards
    the smallest (y, x).
    """
    # The depth of a foreground pixel only depends on the foreground window
    # (everything outside it is background), so work on the tight crop.
    x0, y0, x1, y1 = _fg_window(m.bits)
    sub = m.bits[y0:y1, x0:x1]
    rows, cols = np.nonzero(sub)
    if frame is None:
        frame = Frame(m.width, m.height, FrameTag.ORIGINAL)

    cx, cy = float(cols.mean()), float(rows.mean())
    # np.nonzero yields row-major order, so argmin/argmax tie-break at the
    # first occurrence, i.e. smallest (y, x).
    near = np.abs(cols - cx) + np.abs(rows - cy)
    i1 = int(np.argmin(near))
    p1 = Point(float(cols[i1] + x0), float(rows[i1] + y0), frame)

    depth = _l1_depth(sub)
    i2 = int(np.argmax(depth[rows, cols]))
    p2 = Point(float(cols[i2] + x0), float(rows[i2] + y0), frame)
    return p1, p2


def masks_equal(a: BinaryMask, b: BinaryMask) -> bool:
    return a == b


def empty_rle(width: int, height: int) -> MaskRle:
    return MaskRle(width=width, height=height, counts=(width * height,))
