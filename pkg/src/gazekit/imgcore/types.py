"""Raster value types shared by every detector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster, float64, nominal range 0..255.

    `pixels` is (height, width) row-major. Values stay floating point through
    every operation; quantization happens only at image export.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"gray image must be 2-d and non-empty, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ColorImage:
    """Interleaved RGB raster, float64, 0..255 per channel; shape (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"color image must be (h, w, 3), got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Kernel:
    """Square odd-sided convolution kernel."""

    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        side = 2 * self.radius + 1
        if self.radius < 0 or w.shape != (side, side):
            raise ValueError(f"kernel weights must be ({side}, {side}), got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1


@dataclass(frozen=True)
class GradientField:
    """Per-pixel x/y derivatives plus their Euclidean magnitude."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        gx = np.asarray(self.gx, dtype=np.float64)
        gy = np.asarray(self.gy, dtype=np.float64)
        if gx.shape != gy.shape or gx.ndim != 2:
            raise ValueError("gx/gy must be matching 2-d planes")
        mag = self.magnitude
        if mag is None:
            mag = np.hypot(gx, gy)
        else:
            mag = np.asarray(mag, dtype=np.float64)
            if mag.shape != gx.shape:
                raise ValueError("magnitude plane shape mismatch")
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)
        object.__setattr__(self, "magnitude", mag)


@dataclass(frozen=True)
class ResponseMap:
    """Signed corner-response plane, same dimensions as its source image."""

    response: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.response, dtype=np.float64)
        if r.ndim != 2:
            raise ValueError("response must be a 2-d plane")
        object.__setattr__(self, "response", r)

    @property
    def width(self) -> int:
        return self.response.shape[1]

    @property
    def height(self) -> int:
        return self.response.shape[0]


@dataclass(frozen=True)
class IntegralImage:
    """Summed-area table with a zero top row and left column.

    `table` has shape (source_height + 1, source_width + 1); cell (y, x)
    holds the sum of all source pixels strictly above-left of it.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] < 2 or t.shape[1] < 2:
            raise ValueError("integral table must be at least 2x2")
        object.__setattr__(self, "table", t)

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle, top-left anchored, w/h >= 1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect must have positive size, got {self.w}x{self.h}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def intersection_area(self, other: "Rect") -> int:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0
        return iw * ih

    def iou(self, other: "Rect") -> float:
        inter = self.intersection_area(other)
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0
