"""Image file and wire codecs for the harness.

PNM files go through the native reader/writer; every other format is
delegated to Pillow. The WebSocket service moves frames as base64 PNG,
decoded here at the boundary into float RGB arrays.
"""

from __future__ import annotations

import base64
import binascii
import io
import os

import numpy as np
from PIL import Image

from gazekit.imgcore import ColorImage, GrayImage, read_image, write_image

_PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}


def _suffix(path) -> str:
    return os.path.splitext(str(path))[1].lower()


def load_image(path):
    """GrayImage or ColorImage from a file, format chosen by suffix."""
    if _suffix(path) in _PNM_SUFFIXES:
        return read_image(path)
    with Image.open(path) as im:
        if im.mode in ("1", "L", "I", "I;16", "F"):
            return GrayImage(np.asarray(im.convert("L"), dtype=np.float64))
        return from_pil(im)


def save_image(path, img) -> None:
    if _suffix(path) in _PNM_SUFFIXES:
        write_image(path, img)
        return
    to_pil(img).save(path)


def ensure_color(img) -> ColorImage:
    """ColorImage view of any image; grayscale is replicated across channels."""
    if isinstance(img, ColorImage):
        return img
    return ColorImage(np.repeat(img.pixels[:, :, None], 3, axis=2))


def to_pil(img) -> Image.Image:
    data = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    if isinstance(img, GrayImage):
        return Image.fromarray(data, mode="L")
    return Image.fromarray(data, mode="RGB")


def from_pil(im: Image.Image) -> ColorImage:
    return ColorImage(np.asarray(im.convert("RGB"), dtype=np.float64))


def encode_png_b64(img) -> str:
    buf = io.BytesIO()
    to_pil(img).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(data: str) -> ColorImage:
    """ColorImage from a base64 PNG payload; ValueError on anything malformed."""
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, TypeError) as e:
        raise ValueError(f"bad base64 payload: {e}") from e
    try:
        with Image.open(io.BytesIO(raw)) as im:
            return from_pil(im)
    except Exception as e:
        raise ValueError(f"undecodable image payload: {e}") from e


def draw_rect(img, rect, color=(255, 64, 64)) -> None:
    """1 px rectangle outline, clipped to the image, drawn in place."""
    px = img.pixels
    h, w = px.shape[:2]
    x1, y1 = max(0, rect.x), max(0, rect.y)
    x2, y2 = min(w, rect.x2), min(h, rect.y2)
    if x1 >= x2 or y1 >= y2:
        return
    value = color if px.ndim == 3 else float(np.mean(color))
    px[y1, x1:x2] = value
    px[y2 - 1, x1:x2] = value
    px[y1:y2, x1] = value
    px[y1:y2, x2 - 1] = value


def draw_cross(img, center, size: int = 5, color=(64, 255, 64)) -> None:
    """Crosshair marker at a sub-pixel point, drawn in place."""
    px = img.pixels
    h, w = px.shape[:2]
    cx, cy = int(round(center[0])), int(round(center[1]))
    if not (0 <= cx < w and 0 <= cy < h):
        return
    value = color if px.ndim == 3 else float(np.mean(color))
    px[cy, max(0, cx - size) : min(w, cx + size + 1)] = value
    px[max(0, cy - size) : min(h, cy + size + 1), cx] = value
