"""Pupil and iris localization.

Three cooperating techniques: gradient-directed Hough circles, algebraic
least-squares circle fitting seeded by longest-line scanning, and lateral
arc scoring (OCEM) of candidate circles against the image gradient. The
vertical-edge limbus search cuts the problem down to one dimension first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gazekit import _kernels
from gazekit.imgcore import (
    GradientField,
    GrayImage,
    canny,
    gaussian_smooth,
    sobel_gradients,
)

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class EyeWindow:
    """A grayscale crop plus where it came from in the frame."""

    source: GrayImage
    origin: tuple = (0, 0)
    face_width: float = 0.0

    def __post_init__(self):
        ox, oy = self.origin
        if ox < 0 or oy < 0:
            raise ValueError(f"origin must be non-negative, got {self.origin}")
        if self.face_width < 0:
            raise ValueError("face_width must be non-negative")


@dataclass(frozen=True)
class CircleHypothesis:
    cx: float
    cy: float
    r: float
    score: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.cx) and np.isfinite(self.cy) and np.isfinite(self.r)):
            raise ValueError("circle parameters must be finite")
        if self.r <= 0:
            raise ValueError(f"radius must be positive, got {self.r}")


@dataclass(frozen=True)
class PupilEstimate:
    center: tuple  # sub-pixel frame coordinates
    confidence: float
    method: str

    def __post_init__(self):
        if self.method not in ("hough", "lls", "ocem"):
            raise ValueError(f"unknown method tag {self.method!r}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class EdgeThreshold:
    """Keep only values in the top 20% band of the observed range."""

    max_intensity: float
    min_intensity: float

    def __post_init__(self):
        if self.max_intensity < self.min_intensity:
            raise ValueError("max below min")

    @property
    def cutoff(self) -> float:
        return (self.max_intensity - self.min_intensity) * 0.20

    @property
    def bar(self) -> float:
        return self.max_intensity - self.cutoff

    def accepts(self, value: float) -> bool:
        return value > self.bar


@dataclass(frozen=True)
class PupilConfig:
    smooth_sigma: float = 1.0
    edge_smooth_sigma: float = 1.0
    r_min_frac: float = 0.03        # of face width
    r_max_frac: float = 0.08
    darkness_percentile: float = 35.0
    dark_mask_percentile: float = 25.0
    top_k: int = 5


def fit_circle_least_squares(points) -> CircleHypothesis:
    """Algebraic (Kasa) circle fit: minimize sum((x-a)^2+(y-b)^2-r^2)^2.

    Linear in (2a, 2b, r^2-a^2-b^2); degenerate input is caught by the
    normal-equation condition number. Score is the negative RMS radial
    residual, so exact fits score 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    A = np.column_stack([2.0 * x, 2.0 * y, np.ones_like(x)])
    b = x * x + y * y
    ata = A.T @ A
    if np.linalg.cond(ata) > 1e10:
        raise ValueError("degenerate point configuration (collinear or coincident)")
    sol = np.linalg.solve(ata, A.T @ b)
    cx, cy = sol[0], sol[1]
    r2 = sol[2] + cx * cx + cy * cy
    if r2 <= 0:
        raise ValueError("degenerate fit: non-positive squared radius")
    r = float(np.sqrt(r2))
    resid = np.hypot(x - cx, y - cy) - r
    rms = float(np.sqrt(np.mean(resid * resid)))
    return CircleHypothesis(float(cx), float(cy), r, -rms)


def longest_line_scan(iris_mask, search_rows=None):
    """Midpoint of the longest horizontal run of 1s across the given rows.

    Ties go to the topmost row, then the leftmost start. None when no row
    in range has any 1s.
    """
    mask = np.asarray(iris_mask)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-d")
    h, w = mask.shape
    if search_rows is None:
        search_rows = range(h)
    best = None  # (length, row, start)
    for row in search_rows:
        if row < 0 or row >= h:
            continue
        bits = mask[row] != 0
        if not bits.any():
            continue
        padded = np.concatenate([[False], bits, [False]])
        diff = np.diff(padded.astype(np.int8))
        starts = np.nonzero(diff == 1)[0]
        ends = np.nonzero(diff == -1)[0]
        lengths = ends - starts
        i = int(np.argmax(lengths))
        cand = (int(lengths[i]), row, int(starts[i]))
        if best is None or cand[0] > best[0]:
            best = cand
    if best is None:
        return None
    length, row, start = best
    return ((2 * start + length - 1) / 2.0, float(row))


def _column_gradient_profile(window: GrayImage):
    """(per-column max of |d/dx|, full |d/dx| plane) from a one-direction Sobel."""
    gx = _kernels.convolve2d(window.pixels, _SOBEL_X[::-1, ::-1])
    agx = np.abs(gx)
    return agx.max(axis=0), agx


def limbus_vertical_edges(eye: EyeWindow):
    """Left/right iris boundary columns from the top band of |d/dx|.

    Returns (left_x, right_x, mid_x) in window coordinates, or None when a
    side has no column above the threshold bar.
    """
    window = eye.source
    if window.width < 8:
        raise ValueError(f"window must be >= 8 px wide, got {window.width}")
    profile, _ = _column_gradient_profile(window)
    thr = EdgeThreshold(float(profile.max()), float(profile.min()))
    accepted = profile > thr.bar
    half = window.width // 2
    left_cols = np.nonzero(accepted[:half])[0]
    right_cols = np.nonzero(accepted[half:])[0]
    if left_cols.size == 0 or right_cols.size == 0:
        return None
    left_x = int(left_cols[0])
    right_x = int(half + right_cols[-1])
    return left_x, right_x, (left_x + right_x) / 2.0


def ocem_score(eye: EyeWindow, c: CircleHypothesis) -> float:
    """Mean gradient magnitude along the two lateral limbus arcs.

    16 samples per side over +/- 30 degrees around the horizontal diameter;
    samples falling outside the window contribute 0, so circles over flat or
    absent content score 0.
    """
    window = eye.source
    grad = sobel_gradients(window)
    mag = grad.magnitude
    h, w = mag.shape
    ox, oy = eye.origin
    cx = c.cx - ox
    cy = c.cy - oy
    thetas = np.linspace(-np.pi / 6.0, np.pi / 6.0, 16)
    angles = np.concatenate([thetas, thetas + np.pi])
    xs = cx + c.r * np.cos(angles)
    ys = cy + c.r * np.sin(angles)
    total = 0.0
    for x, y in zip(xs, ys):
        if x < 0 or y < 0 or x > w - 1 or y > h - 1:
            continue
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
        fx, fy = x - x0, y - y0
        total += (
            mag[y0, x0] * (1 - fx) * (1 - fy)
            + mag[y0, x1] * fx * (1 - fy)
            + mag[y1, x0] * (1 - fx) * fy
            + mag[y1, x1] * fx * fy
        )
    return float(total / angles.size)


def hough_circles(edges, gradient: GradientField, r_min: int, r_max: int, top_k: int = 5):
    """Gradient-directed circle voting over integer radii [r_min, r_max].

    Each edge pixel votes along +/- its gradient direction at every radius.
    Peaks survive a 3-D non-max pass, duplicates closer than half their
    combined radius are suppressed, and the winners are refined to
    sub-pixel by a local vote centroid. Ties: more votes, then smaller
    radius, then top-left center.
    """
    if not (1 <= r_min <= r_max):
        raise ValueError(f"need 1 <= r_min <= r_max, got {r_min}..{r_max}")
    plane = edges.pixels if isinstance(edges, GrayImage) else np.asarray(edges)
    h, w = plane.shape
    ys, xs = np.nonzero(plane)
    if xs.size == 0:
        return []
    gx = gradient.gx[ys, xs]
    gy = gradient.gy[ys, xs]
    mag = np.hypot(gx, gy)
    ok = mag > 1e-12
    if not ok.any():
        return []
    xs, ys, gx, gy, mag = xs[ok], ys[ok], gx[ok], gy[ok], mag[ok]
    acc = _kernels.hough_accumulate(
        xs.astype(np.float64),
        ys.astype(np.float64),
        gx / mag,
        gy / mag,
        int(r_min),
        int(r_max),
        h,
        w,
    )

    # local maxima over the 3x3x3 neighborhood (ties allowed)
    padded = np.pad(acc, 1, mode="constant", constant_values=-1)
    is_peak = acc > 0
    for dr in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dr == dy == dx == 0:
                    continue
                is_peak &= (
                    acc
                    >= padded[
                        1 + dr : 1 + dr + acc.shape[0],
                        1 + dy : 1 + dy + h,
                        1 + dx : 1 + dx + w,
                    ]
                )
    ris, pys, pxs = np.nonzero(is_peak)
    if ris.size == 0:
        return []
    votes = acc[ris, pys, pxs]
    order = np.lexsort((pxs, pys, ris, -votes))

    out = []
    for i in order:
        if len(out) == top_k:
            break
        ri, py, px, v = int(ris[i]), int(pys[i]), int(pxs[i]), int(votes[i])
        r = r_min + ri
        if any(np.hypot(px - o.cx, py - o.cy) < 0.5 * (r + o.r) for o in out):
            continue
        # sub-pixel: vote-weighted centroid over the 3x3x3 block
        r0, r1 = max(0, ri - 1), min(acc.shape[0], ri + 2)
        y0, y1 = max(0, py - 1), min(h, py + 2)
        x0, x1 = max(0, px - 1), min(w, px + 2)
        block = acc[r0:r1, y0:y1, x0:x1].astype(np.float64)
        wsum = block.sum()
        rr, yy, xx = np.meshgrid(
            np.arange(r0, r1), np.arange(y0, y1), np.arange(x0, x1), indexing="ij"
        )
        cx = float((block * xx).sum() / wsum)
        cy = float((block * yy).sum() / wsum)
        cr = float(r_min + (block * rr).sum() / wsum)
        out.append(CircleHypothesis(cx, cy, cr, float(v)))
    return out


def detect_pupil(eye: EyeWindow, config: PupilConfig | None = None):
    """Hough-based pupil estimate, or None.

    Smooth, take Canny edges, smooth the edge map again for noise
    robustness, vote over a face-proportional radius band, then drop
    candidates whose interior is not dark. Confidence is the winner's vote
    count against an ideal full circle at its radius.
    """
    if config is None:
        config = PupilConfig()
    window = eye.source
    if eye.face_width <= 0:
        raise ValueError("detect_pupil needs a positive face_width prior")
    r_min = max(2, int(round(config.r_min_frac * eye.face_width)))
    r_max = max(r_min, int(round(config.r_max_frac * eye.face_width)))
    if min(window.width, window.height) < 2 * r_min + 1 or min(window.width, window.height) < 8:
        return None

    smoothed = gaussian_smooth(window, config.smooth_sigma)
    edge_map = canny(smoothed)
    thick = gaussian_smooth(edge_map, config.edge_smooth_sigma)
    binary = thick.pixels > 0.15 * max(1e-12, float(thick.pixels.max()))
    grad = sobel_gradients(smoothed)

    hyps = hough_circles(binary, grad, r_min, r_max, top_k=config.top_k)
    if not hyps:
        return None

    dark_bar = float(np.percentile(window.pixels, config.darkness_percentile))
    yy, xx = np.mgrid[0 : window.height, 0 : window.width]
    for hyp in hyps:
        interior = (xx - hyp.cx) ** 2 + (yy - hyp.cy) ** 2 <= hyp.r * hyp.r
        if not interior.any():
            continue
        if float(window.pixels[interior].mean()) >= dark_bar:
            continue
        ox, oy = eye.origin
        cx = min(max(hyp.cx, 0.0), window.width - 1.0)
        cy = min(max(hyp.cy, 0.0), window.height - 1.0)
        confidence = min(1.0, hyp.score / (2.0 * np.pi * hyp.r))
        return PupilEstimate((ox + cx, oy + cy), confidence, "hough")
    return None


def _run_at(bits, col: int):
    """(start, length) of the dark run containing col, or None."""
    if not (0 <= col < bits.size) or bits[col] == 0:
        return None
    left = col
    while left > 0 and bits[left - 1]:
        left -= 1
    right = col
    while right < bits.size - 1 and bits[right + 1]:
        right += 1
    return left, right - left + 1


def _refine_center(strip, cx: float, cy: float):
    """Sub-pixel center from the dark-run chords around the winner row.

    Chord length obeys L(q)^2 = 4 (r^2 - (q - cy)^2), exactly quadratic in
    the row index, so the vertex of a parabola fit through nearby rows
    recovers cy below the grid. x is the chord midpoints weighted by
    length; long chords sit nearest the center. Only runs containing the
    winner column participate, which keeps unrelated blobs out of the fit.
    """
    h = strip.shape[0]
    q0 = int(round(cy))
    col = int(round(cx))
    rows, lens, mids = [], [], []
    for q in range(max(0, q0 - 3), min(h, q0 + 4)):
        run = _run_at(strip[q], col)
        if run is None:
            continue
        start, length = run
        rows.append(q)
        lens.append(float(length))
        mids.append(start + (length - 1) / 2.0)
    if len(rows) < 3:
        return cx, cy
    rows_a = np.asarray(rows, dtype=np.float64)
    lens_a = np.asarray(lens, dtype=np.float64)
    mids_a = np.asarray(mids, dtype=np.float64)
    rx = float((lens_a * mids_a).sum() / lens_a.sum())
    coef = np.polyfit(rows_a, lens_a**2, 2)
    ry = cy if coef[0] >= -1e-9 else float(-coef[1] / (2.0 * coef[0]))
    # trust the refinement only near the winner
    if abs(rx - cx) > 1.5:
        rx = cx
    if abs(ry - cy) > 1.5:
        ry = cy
    return rx, ry


def detect_pupil_ocem(eye: EyeWindow, config: PupilConfig | None = None):
    """Limbus-guided estimate scored by the lateral arcs, or None.

    The vertical-edge search fixes x and bounds y, longest-line scanning
    over the dark-pixel mask proposes centers, and ocem_score picks the
    winner among them.
    """
    if config is None:
        config = PupilConfig()
    window = eye.source
    if window.width < 8 or window.height < 3:
        return None
    limbus = limbus_vertical_edges(eye)
    if limbus is None:
        return None
    left_x, right_x, mid_x = limbus
    if right_x - left_x < 2:
        return None
    radius = (right_x - left_x) / 2.0

    profile, col_mag = _column_gradient_profile(window)
    thr = EdgeThreshold(float(profile.max()), float(profile.min()))
    band_rows = np.nonzero(
        (col_mag[:, left_x] > thr.bar) | (col_mag[:, right_x] > thr.bar)
    )[0]
    if band_rows.size == 0:
        y_lo, y_hi = 0, window.height - 1
    else:
        y_lo, y_hi = int(band_rows.min()), int(band_rows.max())

    # percentile over the searched strip, not the whole window: the window
    # is mostly sclera and would push the dark bar up to sclera intensity
    region = window.pixels[y_lo : y_hi + 1, left_x : right_x + 1]
    dark_bar = float(np.percentile(region, config.dark_mask_percentile))
    # a sclera-dominated strip still pushes the percentile to full
    # brightness, which would mark every pixel "dark"; cap the bar at the
    # strip's intensity midpoint so the mask keeps meaning dark pixels
    dark_bar = min(dark_bar, (float(region.min()) + float(region.max())) / 2.0)
    strip = np.zeros_like(window.pixels, dtype=np.uint8)
    strip[y_lo : y_hi + 1, left_x : right_x + 1] = region <= dark_bar

    # plausible iris radii: the limbus half-width and per-row chord halves,
    # clamped to the anatomical face-width band so undersized decoys can't
    # present their own edge as a limbus
    if eye.face_width > 0:
        r_min = max(2.0, config.r_min_frac * eye.face_width)
        r_max = max(r_min, config.r_max_frac * eye.face_width)
    else:
        r_min, r_max = 2.0, max(2.0, radius)
    clamp_r = lambda r: min(max(r, r_min), r_max)

    candidates = {}

    def add(cx, cy, r):
        key = (round(cx * 2) / 2, round(cy * 2) / 2, round(r * 2) / 2)
        candidates.setdefault(key, (cx, cy, r))

    for row in range(y_lo, y_hi + 1):
        scan = longest_line_scan(strip, [row])
        if scan is None:
            continue
        cx, cy = scan
        run = _run_at(strip[row], int(round(cx)))
        run_len = run[1] if run is not None else int(strip[row].sum())
        add(cx, cy, clamp_r(radius))
        add(cx, cy, clamp_r(run_len / 2.0))
        add(mid_x, cy, clamp_r(radius))
    if not candidates:
        add(mid_x, (y_lo + y_hi) / 2.0, clamp_r(radius))

    ox, oy = eye.origin
    best = None
    grad = sobel_gradients(window)
    max_mag = float(grad.magnitude.max())
    for cx, cy, r in candidates.values():
        hyp = CircleHypothesis(ox + cx, oy + cy, r)
        s = ocem_score(eye, hyp)
        key = (s, -hyp.r, -hyp.cy, -hyp.cx)
        if best is None or key > best[0]:
            best = (key, hyp, s)
    _, hyp, s = best
    cx, cy = _refine_center(strip, hyp.cx - ox, hyp.cy - oy)
    cx = min(max(cx, 0.0), window.width - 1.0)
    cy = min(max(cy, 0.0), window.height - 1.0)
    confidence = 0.0 if max_mag <= 0 else min(1.0, s / max_mag)
    return PupilEstimate((ox + cx, oy + cy), confidence, "ocem")
