"""Boxes, binary masks, overlaps and the RLE text format.

Boxes are normalized ``(cx, cy, w, h)`` in ``[0, 1]``; ``Box.empty()`` is the
``w = h = 0`` sentinel. Masks are row-major binary grids with the origin at the
top-left pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np

from qprop import kernels
from qprop.errors import EmptyBox, ShapeMismatch

_TOL = 1e-9
MIN_SIZE = 1e-4


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < -_TOL or v > 1 + _TOL:
                raise ValueError(f"Box.{name}={v} outside [0, 1]")
        if (self.w == 0) != (self.h == 0):
            raise ValueError("Box with exactly one zero side is neither empty nor valid")

    @classmethod
    def empty(cls) -> "Box":
        return cls(0.0, 0.0, 0.0, 0.0)

    @property
    def is_empty(self) -> bool:
        return self.w == 0 and self.h == 0

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)

    def corners(self) -> tuple[float, float, float, float]:
        """Normalized ``(x0, y0, x1, y1)``."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )


def box_to_corners(b: Box, width: int, height: int) -> tuple[float, float, float, float]:
    """Pixel-space corners ``(x0, y0, x1, y1)`` of a non-empty box."""
    if b.is_empty:
        raise EmptyBox("box_to_corners on empty box")
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    x0, y0, x1, y1 = b.corners()
    return x0 * width, y0 * height, x1 * width, y1 * height


def corners_to_box(x0: float, y0: float, x1: float, y1: float, width: int, height: int) -> Box:
    if x1 < x0 or y1 < y0:
        raise ValueError("corners out of order")
    return Box(
        (x0 + x1) / 2 / width,
        (y0 + y1) / 2 / height,
        (x1 - x0) / width,
        (y1 - y0) / height,
    )


def _inter_area(a: Box, b: Box) -> float:
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def _corner_area(b: Box) -> float:
    x0, y0, x1, y1 = b.corners()
    return (x1 - x0) * (y1 - y0)


def box_iou(a: Box, b: Box) -> float:
    if a.is_empty or b.is_empty:
        return 0.0
    inter = _inter_area(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def box_giou(a: Box, b: Box) -> float:
    """Generalized IoU: ``iou - (hull - union) / hull``."""
    if a.is_empty or b.is_empty:
        raise EmptyBox("box_giou requires non-empty boxes")
    inter = _inter_area(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    # hull >= union exactly; clamp away rounding so giou <= iou always holds
    return inter / union - max(hull - union, 0.0) / hull


def compose_box(base: Box, offset: Sequence[float]) -> Box:
    """``base + offset`` componentwise, clamped back into the valid box range."""
    dcx, dcy, dw, dh = (float(v) for v in offset)
    return Box(
        min(max(base.cx + dcx, 0.0), 1.0),
        min(max(base.cy + dcy, 0.0), 1.0),
        min(max(base.w + dw, MIN_SIZE), 1.0),
        min(max(base.h + dh, MIN_SIZE), 1.0),
    )


class Mask:
    """Immutable binary grid of shape ``(height, width)``."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
        arr = arr.astype(np.uint8)
        arr.flags.writeable = False
        self._bits = arr

    @classmethod
    def zeros(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def bits(self) -> np.ndarray:
        """Read-only ``uint8`` array of shape ``(height, width)``."""
        return self._bits

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self._bits))

    @property
    def is_empty(self) -> bool:
        return not self._bits.any()

    def centroid(self) -> tuple[float, float]:
        """Pixel-centre centroid ``(x, y)``; raises on an empty mask."""
        ys, xs = np.nonzero(self._bits)
        if xs.size == 0:
            raise ValueError("centroid of empty mask")
        return float(xs.mean() + 0.5), float(ys.mean() + 0.5)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash((self.shape, self._bits.tobytes()))

    def __repr__(self):
        return f"Mask({self.width}x{self.height}, area={self.area})"


def _check_same_shape(a: Mask, b: Mask) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def mask_iou(a: Mask, b: Mask) -> float:
    """Mask IoU; two empty masks score 1."""
    _check_same_shape(a, b)
    inter, union = kernels.inter_union(a.bits, b.bits)
    if union == 0:
        return 1.0
    return inter / union


def tight_box(m: Mask) -> Box:
    """Smallest pixel-aligned box containing every set pixel (empty mask -> empty box)."""
    if m.is_empty:
        return Box.empty()
    rows = np.flatnonzero(m.bits.any(axis=1))
    cols = np.flatnonzero(m.bits.any(axis=0))
    return corners_to_box(cols[0], rows[0], cols[-1] + 1, rows[-1] + 1, m.width, m.height)


# -- RLE ---------------------------------------------------------------------


def rle_encode(m: Mask) -> list[int]:
    """Run lengths over the row-major bits, alternating and starting with zeros."""
    return [int(v) for v in kernels.rle_runs(m.bits.ravel())]


def rle_decode(runs: Sequence[int], width: int, height: int) -> Mask:
    flat = kernels.rle_expand(list(runs), width * height)
    return Mask(flat.reshape(height, width))


def format_rle(m: Mask) -> str:
    return " ".join(str(v) for v in [m.width, m.height, *rle_encode(m)])


def parse_rle(text: str) -> Mask:
    fields = text.split()
    if len(fields) < 3:
        raise ValueError("RLE text needs 'W H n0 ...'")
    try:
        values = [int(v) for v in fields]
    except ValueError as exc:
        raise ValueError(f"non-integer field in RLE text: {exc}") from None
    width, height, *runs = values
    if width < 1 or height < 1:
        raise ValueError("RLE dimensions must be positive")
    return rle_decode(runs, width, height)


def write_rle(path: str | PathLike, m: Mask) -> None:
    Path(path).write_text(format_rle(m) + "\n")


def read_rle(path: str | PathLike) -> Mask:
    return parse_rle(Path(path).read_text())
