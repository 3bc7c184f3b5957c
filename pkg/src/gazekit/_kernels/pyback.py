"""NumPy implementations of the hot kernels.

Mirror of the compiled module in `native.pyx`; both expose the same
functions over plain ndarrays so callers never care which one loaded.
"""

import numpy as np
from scipy import ndimage

BACKEND = "python"

_EIGHT = np.ones((3, 3), dtype=bool)


def convolve2d(src, kernel):
    """2-D convolution (kernel flipped), borders replicated."""
    src = np.asarray(src, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(src, ((ry, ry), (rx, rx)), mode="edge")
    h, w = src.shape
    out = np.zeros((h, w), dtype=np.float64)
    # true convolution: output(p) = sum_k kernel(k) * src(p - k)
    for i in range(kh):
        for j in range(kw):
            wgt = kernel[i, j]
            if wgt == 0.0:
                continue
            ys = ry - (i - ry)
            xs = rx - (j - rx)
            out += wgt * padded[ys : ys + h, xs : xs + w]
    return out


def canny_nms(mag, gx, gy):
    """Directional non-maximum suppression of a gradient magnitude plane.

    Keeps a pixel only if its magnitude beats both neighbours along the
    quantized gradient direction (4 bins); ties on the positive-offset side
    are suppressed so plateau edges thin to one pixel.
    """
    mag = np.asarray(mag, dtype=np.float64)
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # bins: 0 = E/W, 1 = NE/SW, 2 = N/S, 3 = NW/SE
    bins = np.zeros(mag.shape, dtype=np.int8)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3

    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    out = np.zeros_like(mag)
    for b, (dy, dx) in offsets.items():
        n1 = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        n2 = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        sel = (bins == b) & (mag > n1) & (mag >= n2)
        out[sel] = mag[sel]
    return out


def hysteresis8(strong, weak):
    """Edge tracking: weak pixels survive iff 8-connected to a strong one."""
    strong = np.asarray(strong, dtype=bool)
    weak = np.asarray(weak, dtype=bool)
    both = strong | weak
    labels, n = ndimage.label(both, structure=_EIGHT)
    if n == 0:
        return np.zeros(strong.shape, dtype=np.uint8)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return (keep[labels]).astype(np.uint8)


def hough_accumulate(xs, ys, ux, uy, rmin, rmax, height, width):
    """Gradient-directed circle voting.

    Every edge pixel votes along +/- its unit gradient direction for every
    radius in [rmin, rmax]. Returns an int32 accumulator of shape
    (rmax - rmin + 1, height, width).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ux = np.asarray(ux, dtype=np.float64)
    uy = np.asarray(uy, dtype=np.float64)
    nr = rmax - rmin + 1
    acc = np.zeros((nr, height, width), dtype=np.int32)
    for ri in range(nr):
        r = rmin + ri
        plane = acc[ri].ravel()
        for sign in (1.0, -1.0):
            cx = np.rint(xs + sign * r * ux).astype(np.int64)
            cy = np.rint(ys + sign * r * uy).astype(np.int64)
            ok = (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height)
            if not ok.any():
                continue
            flat = cy[ok] * width + cx[ok]
            plane += np.bincount(flat, minlength=height * width).astype(np.int32)
    return acc


def cascade_scan(
    ii,
    sqii,
    xs,
    ys,
    win_w,
    win_h,
    norm_x,
    norm_y,
    norm_w,
    norm_h,
    stage_starts,
    stage_thresh,
    stump_feat,
    stump_thresh,
    stump_left,
    stump_right,
    feat_starts,
    rect_x,
    rect_y,
    rect_w,
    rect_h,
    rect_weight,
):
    """Evaluate one scale's worth of windows against a flattened cascade.

    Windows are dropped stage by stage; zero-variance windows are dropped
    outright. Returns a uint8 accept flag per window.
    """
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    m = xs.shape[0]
    accepted = np.zeros(m, dtype=np.uint8)
    if m == 0:
        return accepted

    def sums(table, x0, y0, w, h):
        return (
            table[y0 + h, x0 + w] - table[y0, x0 + w] - table[y0 + h, x0] + table[y0, x0]
        )

    narea = float(norm_w * norm_h)
    nx = xs + norm_x
    ny = ys + norm_y
    s1 = sums(ii, nx, ny, norm_w, norm_h)
    s2 = sums(sqii, nx, ny, norm_w, norm_h)
    nf2 = narea * s2 - s1 * s1
    alive = np.nonzero(nf2 > 1e-9)[0]
    if alive.size == 0:
        return accepted
    inv_nf = 1.0 / np.sqrt(nf2[alive])

    ax = xs[alive]
    ay = ys[alive]
    n_stages = stage_thresh.shape[0]
    for s in range(n_stages):
        votes = np.zeros(ax.shape[0], dtype=np.float64)
        for t in range(stage_starts[s], stage_starts[s + 1]):
            f = stump_feat[t]
            val = np.zeros(ax.shape[0], dtype=np.float64)
            for r in range(feat_starts[f], feat_starts[f + 1]):
                val += rect_weight[r] * sums(
                    ii, ax + rect_x[r], ay + rect_y[r], rect_w[r], rect_h[r]
                )
            val *= inv_nf
            votes += np.where(val < stump_thresh[t], stump_left[t], stump_right[t])
        ok = votes >= stage_thresh[s]
        alive = alive[ok]
        if alive.size == 0:
            return accepted
        ax = ax[ok]
        ay = ay[ok]
        inv_nf = inv_nf[ok]
    accepted[alive] = 1
    return accepted
