"""Training-free face and eye localization from skin color.

Pixels are classified by inclusive YCbCr bounds, the mask is denoised by a
single neighbor-majority pass, and face candidates are scored from connected
skin clusters. Eye regions come from non-skin holes in the upper part of the
face. Fast enough for region-of-interest work only; pupil-level precision is
out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from gazekit.imgcore import ColorImage, Rect, resize_color, ycbcr_planes

# 4-connectivity: holes stay separable from the background
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)

_IDEAL_ASPECT = 0.75
_MIN_AREA_FRACTION = 0.02
_MAX_AREA_FRACTION = 0.60
_ASPECT_LO, _ASPECT_HI = 0.5, 1.1
_EYE_BAND = 0.60          # eyes live in the top 60% of the face rect
_MAX_SIDE = 320           # full-resolution segmentation is too slow to be useful


@dataclass(frozen=True)
class SkinRange:
    """Inclusive YCbCr bounds; defaults cover common skin tones."""

    y_min: float = 80.0
    y_max: float = 240.0
    cb_min: float = 105.0
    cb_max: float = 135.0
    cr_min: float = 135.0
    cr_max: float = 165.0

    def __post_init__(self):
        for lo, hi, name in (
            (self.y_min, self.y_max, "Y"),
            (self.cb_min, self.cb_max, "Cb"),
            (self.cr_min, self.cr_max, "Cr"),
        ):
            if not (0 <= lo <= hi <= 255):
                raise ValueError(f"bad {name} range [{lo}, {hi}]")


@dataclass(frozen=True)
class SkinMask:
    """Binary plane, 1 = skin."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.size == 0:
            raise ValueError("mask must be a non-empty 2-d plane")
        object.__setattr__(self, "bits", (bits != 0).astype(np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class FaceRegion:
    face: Rect
    eyes: list = field(default_factory=list)
    score: float = 0.0

    def __post_init__(self):
        if len(self.eyes) > 2:
            raise ValueError("at most two eye rects")
        for e in self.eyes:
            if not (
                e.x >= self.face.x
                and e.y >= self.face.y
                and e.x2 <= self.face.x2
                and e.y2 <= self.face.y2
            ):
                raise ValueError(f"eye {e} outside face {self.face}")
        if len(self.eyes) == 2:
            a, b = self.eyes
            if not (a.x2 <= b.x or b.x2 <= a.x):
                raise ValueError("two eyes must be horizontally disjoint")


def classify_skin(img: ColorImage, rng: SkinRange | None = None) -> SkinMask:
    """Pointwise skin test: all three YCbCr channels inside the bounds."""
    if rng is None:
        rng = SkinRange()
    y, cb, cr = ycbcr_planes(img)
    bits = (
        (y >= rng.y_min) & (y <= rng.y_max)
        & (cb >= rng.cb_min) & (cb <= rng.cb_max)
        & (cr >= rng.cr_min) & (cr <= rng.cr_max)
    )
    return SkinMask(bits.astype(np.uint8))


def fill_holes(mask: SkinMask, n: int = 5) -> SkinMask:
    """Promote 0-pixels with >= n skin 8-neighbors; single pass, no cascade."""
    if not (0 <= n <= 8):
        raise ValueError(f"n must be in 0..8, got {n}")
    bits = mask.bits
    padded = np.pad(bits, 1, mode="constant")
    h, w = bits.shape
    counts = np.zeros((h, w), dtype=np.int32)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            counts += padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return SkinMask(np.where((bits == 0) & (counts >= n), 1, bits))


def _component_rect(labels: np.ndarray, idx: int) -> Rect:
    ys, xs = np.nonzero(labels == idx)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def find_face(mask: SkinMask, frame_area: float | None = None):
    """Best face-proportioned skin cluster, or None.

    Candidates must occupy 2%..60% of the frame with width/height aspect in
    [0.5, 1.1]. Score multiplies area fraction, closeness to the 0.75 ideal
    aspect, and vertical centrality; the highest-scoring cluster wins.
    """
    if frame_area is None:
        frame_area = float(mask.width * mask.height)
    labels, count = ndimage.label(mask.bits, structure=_CROSS)
    best = None
    for idx in range(1, count + 1):
        area = float((labels == idx).sum())
        frac = area / frame_area
        if not (_MIN_AREA_FRACTION <= frac <= _MAX_AREA_FRACTION):
            continue
        rect = _component_rect(labels, idx)
        aspect = rect.w / rect.h
        if not (_ASPECT_LO <= aspect <= _ASPECT_HI):
            continue
        aspect_closeness = max(0.0, 1.0 - abs(aspect - _IDEAL_ASPECT) / _IDEAL_ASPECT)
        cy = (rect.y + rect.y2) / 2.0 / mask.height
        centrality = max(0.0, 1.0 - 2.0 * abs(cy - 0.5))
        score = frac * aspect_closeness * centrality
        if best is None or score > best[0]:
            best = (score, rect, idx)
    if best is None:
        return None
    score, rect, idx = best
    eyes = find_eyes(mask, rect)
    return FaceRegion(rect, eyes, score)


def find_eyes(mask: SkinMask, face: Rect):
    """Non-skin holes in the upper 60% of the face rect, left to right.

    Holes connected to the crop border are background, not eyes. Survivors
    are filtered by size against the face, the two largest horizontally
    disjoint ones win.
    """
    if not face.inside(mask.width, mask.height):
        raise ValueError(f"face {face} outside mask {mask.width}x{mask.height}")
    crop = mask.bits[face.y : face.y2, face.x : face.x2]
    holes = (crop == 0).astype(np.uint8)
    labels, count = ndimage.label(holes, structure=_CROSS)
    if count == 0:
        return []
    border = np.unique(
        np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    )
    face_area = float(face.w * face.h)
    candidates = []
    for idx in range(1, count + 1):
        if idx in border:
            continue
        area = float((labels == idx).sum())
        if area < 4 or area > 0.10 * face_area:
            continue
        rect = _component_rect(labels, idx)
        if rect.w > 0.5 * face.w or rect.h > 0.5 * face.h:
            continue
        cy = (rect.y + rect.y2) / 2.0
        if cy > _EYE_BAND * face.h:
            continue
        candidates.append((area, rect))
    candidates.sort(key=lambda t: (-t[0], t[1].x, t[1].y))
    chosen = []
    for _, rect in candidates:
        if len(chosen) == 2:
            break
        if any(not (rect.x2 <= c.x or c.x2 <= rect.x) for c in chosen):
            continue
        chosen.append(rect)
    chosen.sort(key=lambda r: r.x)
    return [
        Rect(face.x + r.x, face.y + r.y, r.w, r.h)
        for r in chosen
    ]


def locate_face(img: ColorImage, rng: SkinRange | None = None, n: int = 5):
    """classify -> fill -> find, at reduced resolution, rects in source coords."""
    long_side = max(img.width, img.height)
    scale = 1.0
    work = img
    if long_side > _MAX_SIDE:
        scale = _MAX_SIDE / long_side
        work = resize_color(
            img,
            max(1, int(round(img.width * scale))),
            max(1, int(round(img.height * scale))),
        )
    mask = fill_holes(classify_skin(work, rng), n)
    region = find_face(mask)
    if region is None or scale == 1.0:
        return region

    def upscale(r: Rect) -> Rect:
        x0 = int(np.floor(r.x / scale))
        y0 = int(np.floor(r.y / scale))
        x1 = min(img.width, int(np.ceil(r.x2 / scale)))
        y1 = min(img.height, int(np.ceil(r.y2 / scale)))
        return Rect(x0, y0, max(1, x1 - x0), max(1, y1 - y0))

    return FaceRegion(upscale(region.face), [upscale(e) for e in region.eyes], region.score)
