"""Binary PGM (P5) and PPM (P6) readers/writers.

Only maxval 255 is supported. Comments (# to end of line) are allowed
anywhere whitespace is. Export quantizes with clip(round(x), 0, 255);
that is the only place float pixels get rounded.
"""

from __future__ import annotations

import io
import os
from typing import BinaryIO, Union

import numpy as np

from gazekit.imgcore.types import ColorImage, GrayImage

PathLike = Union[str, os.PathLike]


def _read_token(f: BinaryIO) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise ValueError("truncated header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _read_header(f: BinaryIO):
    magic = _read_token(f)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported magic {magic!r}, expected P5 or P6")
    w = int(_read_token(f))
    h = int(_read_token(f))
    maxval = int(_read_token(f))
    if w < 1 or h < 1:
        raise ValueError(f"bad dimensions {w}x{h}")
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}, expected 255")
    return magic, w, h


def read_pgm(path: PathLike) -> GrayImage:
    with open(path, "rb") as f:
        magic, w, h = _read_header(f)
        if magic != b"P5":
            raise ValueError("not a P5 grayscale file")
        raw = f.read(w * h)
        if len(raw) < w * h:
            raise ValueError("truncated pixel data")
        px = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    return GrayImage(px.astype(np.float64))


def read_ppm(path: PathLike) -> ColorImage:
    with open(path, "rb") as f:
        magic, w, h = _read_header(f)
        if magic != b"P6":
            raise ValueError("not a P6 color file")
        raw = f.read(w * h * 3)
        if len(raw) < w * h * 3:
            raise ValueError("truncated pixel data")
        px = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return ColorImage(px.astype(np.float64))


def read_image(path: PathLike) -> Union[GrayImage, ColorImage]:
    """Dispatch on the magic number; .pgm -> GrayImage, .ppm -> ColorImage."""
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        return read_pgm(path)
    if magic == b"P6":
        return read_ppm(path)
    raise ValueError(f"unsupported magic {magic!r} in {path}")


def quantize(pixels: np.ndarray) -> np.ndarray:
    """clip(round(x), 0, 255) as uint8; round half away from zero not needed
    since values are non-negative after the clip."""
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def write_pgm(path: PathLike, img: GrayImage) -> None:
    buf = io.BytesIO()
    buf.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
    buf.write(quantize(img.pixels).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def write_ppm(path: PathLike, img: ColorImage) -> None:
    buf = io.BytesIO()
    buf.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
    buf.write(quantize(img.pixels).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def write_image(path: PathLike, img: Union[GrayImage, ColorImage]) -> None:
    if isinstance(img, GrayImage):
        write_pgm(path, img)
    elif isinstance(img, ColorImage):
        write_ppm(path, img)
    else:
        raise TypeError(f"cannot write {type(img).__name__}")
