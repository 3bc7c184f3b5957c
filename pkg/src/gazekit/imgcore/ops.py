"""Pixel-level primitives: color conversion, smoothing, gradients, edges,
corners, and summed-area tables.

All operations are pure; every intermediate stays in floating point.
"""

from __future__ import annotations

import numpy as np

from gazekit import _kernels
from gazekit.imgcore.types import (
    ColorImage,
    GradientField,
    GrayImage,
    IntegralImage,
    Kernel,
    Rect,
)

# BT.601 luma weights, full-range (JPEG) convention.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def to_grayscale(img: ColorImage) -> GrayImage:
    """Collapse RGB to luma (0.299 R + 0.587 G + 0.114 B)."""
    px = img.pixels
    return GrayImage(_LUMA_R * px[:, :, 0] + _LUMA_G * px[:, :, 1] + _LUMA_B * px[:, :, 2])


def rgb_to_ycbcr(r: float, g: float, b: float):
    """Full-range BT.601 conversion; Cb/Cr centered at 128, clamped to 0..255."""
    y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    clamp = lambda v: min(255.0, max(0.0, v))
    return clamp(y), clamp(cb), clamp(cr)


def ycbcr_planes(img: ColorImage):
    """Vectorized rgb_to_ycbcr over a full image; returns (Y, Cb, Cr) planes."""
    r = img.pixels[:, :, 0]
    g = img.pixels[:, :, 1]
    b = img.pixels[:, :, 2]
    y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return (
        np.clip(y, 0.0, 255.0),
        np.clip(cb, 0.0, 255.0),
        np.clip(cr, 0.0, 255.0),
    )


def gaussian_kernel(sigma: float, radius: int) -> Kernel:
    """Isotropic Gaussian weights on a (2r+1)^2 grid, renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    w = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return Kernel(radius, w / w.sum())


def convolve(img: GrayImage, k: Kernel) -> GrayImage:
    """Same-size 2-D convolution with edge replication at the borders.

    Sliding-window convention: the kernel is applied as given while it
    slides, so a unit impulse imprints the flipped weights.
    """
    if k.side > min(img.width, img.height):
        raise ValueError(
            f"kernel side {k.side} exceeds image {img.width}x{img.height}"
        )
    return GrayImage(_kernels.convolve2d(img.pixels, k.weights[::-1, ::-1]))


def gaussian_smooth(img: GrayImage, sigma: float, radius: int | None = None) -> GrayImage:
    """Convolve with a Gaussian; radius defaults to ceil(3*sigma)."""
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    radius = min(radius, (min(img.width, img.height) - 1) // 2)
    if radius < 1:
        return img
    return convolve(img, gaussian_kernel(sigma, radius))


def sobel_gradients(img: GrayImage) -> GradientField:
    """3x3 Sobel derivative pair; positive gx points to brighter right."""
    if img.width < 3 or img.height < 3:
        raise ValueError("image must be at least 3x3 for Sobel gradients")
    # correlation with the standard kernels == convolution with them flipped
    gx = _kernels.convolve2d(img.pixels, _SOBEL_X[::-1, ::-1])
    gy = _kernels.convolve2d(img.pixels, _SOBEL_Y[::-1, ::-1])
    return GradientField(gx, gy)


def canny(img: GrayImage, low: float | None = None, high: float | None = None) -> GrayImage:
    """Canny edges as a binary 0/255 plane.

    Gradient -> directional non-max suppression -> double threshold ->
    hysteresis over 8-connectivity. Thresholds default to 0.08/0.20 of the
    maximum gradient magnitude.
    """
    grad = sobel_gradients(img)
    mag = grad.magnitude
    peak = float(mag.max())
    if low is None:
        low = 0.08 * peak
    if high is None:
        high = 0.20 * peak
    if low < 0 or low > high:
        raise ValueError(f"need 0 <= low <= high, got low={low} high={high}")
    if peak == 0.0:
        return GrayImage(np.zeros_like(mag))
    thin = _kernels.canny_nms(mag, grad.gx, grad.gy)
    strong = thin > high
    weak = (thin > low) & ~strong
    edges = _kernels.hysteresis8(
        strong.astype(np.uint8), weak.astype(np.uint8)
    )
    return GrayImage(edges.astype(np.float64) * 255.0)


def harris_corners(
    img: GrayImage,
    k: float = 0.04,
    window_sigma: float = 1.0,
    thresh: float | None = None,
    min_dist: int = 4,
):
    """Harris corner detection.

    Structure tensor smoothed by a Gaussian window; R = det - k * trace^2.
    Local maxima above `thresh` (default: 1% of the peak response) are
    non-max suppressed within `min_dist` and returned as
    ((x, y), response) sorted by response descending. Corner coordinates
    are refined to sub-pixel by a quadratic fit around the peak.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError("image must be at least 3x3")
    grad = sobel_gradients(img)
    win = gaussian_kernel(window_sigma, max(1, int(np.ceil(3.0 * window_sigma))))
    ixx = _kernels.convolve2d(grad.gx * grad.gx, win.weights)
    ixy = _kernels.convolve2d(grad.gx * grad.gy, win.weights)
    iyy = _kernels.convolve2d(grad.gy * grad.gy, win.weights)
    resp = (ixx * iyy - ixy * ixy) - k * (ixx + iyy) ** 2

    peak = float(resp.max())
    if thresh is None:
        thresh = 0.01 * peak if peak > 0 else np.inf
    h, w = resp.shape
    padded = np.pad(resp, 1, mode="constant", constant_values=-np.inf)
    is_max = resp > thresh
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_max &= resp >= padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    ys, xs = np.nonzero(is_max)
    if ys.size == 0:
        return []
    vals = resp[ys, xs]
    # response desc, then y asc, then x asc: stable and fully deterministic
    order = np.lexsort((xs, ys, -vals))
    # suppress on the refined coordinates so the returned list itself
    # honours the pairwise separation
    out = []
    min_d2 = float(min_dist) ** 2
    for i in order:
        x, y, v = int(xs[i]), int(ys[i]), float(vals[i])
        sx, sy = _subpixel_peak(resp, x, y)
        if any((sx - kx) ** 2 + (sy - ky) ** 2 < min_d2 for (kx, ky), _ in out):
            continue
        out.append(((sx, sy), v))
    return out


def _subpixel_peak(plane: np.ndarray, x: int, y: int):
    """Quadratic 1-d fits along each axis; offset clamped to +/- 0.5 px."""
    h, w = plane.shape
    sx, sy = float(x), float(y)
    if 0 < x < w - 1:
        l, c, r = plane[y, x - 1], plane[y, x], plane[y, x + 1]
        denom = l - 2 * c + r
        if denom != 0:
            off = 0.5 * (l - r) / denom
            if abs(off) <= 0.5:
                sx += off
    if 0 < y < h - 1:
        t, c, b = plane[y - 1, x], plane[y, x], plane[y + 1, x]
        denom = t - 2 * c + b
        if denom != 0:
            off = 0.5 * (t - b) / denom
            if abs(off) <= 0.5:
                sy += off
    return sx, sy


def integral_image(img: GrayImage) -> IntegralImage:
    """Summed-area table with zero-padded first row and column."""
    table = np.zeros((img.height + 1, img.width + 1), dtype=np.float64)
    table[1:, 1:] = img.pixels.cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(table)


def rect_sum(ii: IntegralImage, r: Rect) -> float:
    """Sum of source pixels inside `r` via the 4-corner lookup."""
    if not r.inside(ii.width, ii.height):
        raise ValueError(f"rect {r} outside {ii.width}x{ii.height} source bounds")
    t = ii.table
    return float(t[r.y2, r.x2] - t[r.y, r.x2] - t[r.y2, r.x] + t[r.y, r.x])


def resize_gray(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Bilinear resample (plumbing for normalization and mask downscale)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("target size must be positive")
    src = img.pixels
    h, w = src.shape
    if (new_w, new_h) == (w, h):
        return GrayImage(src.copy())
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return GrayImage(top * (1 - fy[:, None]) + bot * fy[:, None])


def resize_color(img: ColorImage, new_w: int, new_h: int) -> ColorImage:
    planes = [
        resize_gray(GrayImage(img.pixels[:, :, c]), new_w, new_h).pixels
        for c in range(3)
    ]
    return ColorImage(np.stack(planes, axis=-1))
