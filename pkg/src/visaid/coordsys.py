"""Pixel and padded-square normalized coordinate frames.

Normalized coordinates live on a 0-999 integer grid laid over the image
after it has been padded to a square. Padding is centered: the shorter
axis gets floor((side - length) / 2) on its leading edge.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass

NORM_MAX = 999
NORM_CELLS = 1000


@dataclass(frozen=True)
class ImageShape:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image shape must be positive, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class PadSpec:
    """Square padding: side length and per-axis offsets of the image inside it."""

    side: int
    offset_x: int
    offset_y: int


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"pixel point must be finite, got ({self.u}, {self.v})")


def _as_norm_coord(value) -> int:
    try:
        coord = operator.index(value)
    except TypeError:
        raise ValueError(f"normalized coordinate must be an integer, got {value!r}")
    if not 0 <= coord <= NORM_MAX:
        raise ValueError(f"normalized coordinate {coord} out of [0, {NORM_MAX}]")
    return coord


@dataclass(frozen=True)
class NormPoint:
    x: int
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", _as_norm_coord(self.x))
        object.__setattr__(self, "y", _as_norm_coord(self.y))


@dataclass(frozen=True)
class NormBox:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, _as_norm_coord(getattr(self, name)))
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order: {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def contains(self, p: NormPoint) -> bool:
        """Inclusive containment: edge points count as inside."""
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2


class OutOfBoundsError(ValueError):
    """Pixel coordinate outside the image extent."""


def pad_spec(shape: ImageShape) -> PadSpec:
    """Centered square padding for ``shape``.

    The pad side is max(width, height); the shorter axis receives
    floor((side - length) / 2) on its leading edge.
    """
    side = max(shape.width, shape.height)
    return PadSpec(
        side=side,
        offset_x=(side - shape.width) // 2,
        offset_y=(side - shape.height) // 2,
    )


def to_norm(p: PixelPoint, shape: ImageShape) -> NormPoint:
    """Discretize a pixel coordinate into the padded-square 0-999 grid.

    Per axis: n = clamp(floor((coord + offset) / side * 1000), 0, 999).
    Accepts coordinates on the closed extent [0, width] x [0, height] so
    that the outer corner of the last pixel row/column maps cleanly (the
    clamp folds it onto 999).
    """
    if not (0 <= p.u <= shape.width and 0 <= p.v <= shape.height):
        raise OutOfBoundsError(
            f"pixel ({p.u}, {p.v}) outside image extent {shape.width}x{shape.height}"
        )
    spec = pad_spec(shape)
    x = math.floor((p.u + spec.offset_x) / spec.side * NORM_CELLS)
    y = math.floor((p.v + spec.offset_y) / spec.side * NORM_CELLS)
    return NormPoint(x=min(max(x, 0), NORM_MAX), y=min(max(y, 0), NORM_MAX))


def from_norm(n: NormPoint, shape: ImageShape) -> PixelPoint:
    """Map a normalized point back to pixels at its cell center.

    Per axis: coord = (n + 0.5) * side / 1000 - offset, clamped into the
    image extent (points that land in the padding fold onto the border).
    """
    spec = pad_spec(shape)
    u = (n.x + 0.5) * spec.side / NORM_CELLS - spec.offset_x
    v = (n.y + 0.5) * spec.side / NORM_CELLS - spec.offset_y
    return PixelPoint(
        u=min(max(u, 0.0), float(shape.width)),
        v=min(max(v, 0.0), float(shape.height)),
    )
