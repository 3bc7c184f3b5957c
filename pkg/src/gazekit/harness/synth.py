"""Synthetic eye and face rig: ground-truth imagery for the whole stack.

The rig is a deterministic renderer where the pupil position is an exact
affine function of the gaze target, so every pipeline stage can be tested
against known coordinates. Edges are anti-aliased over a one-pixel band;
that sub-pixel structure is what the detectors' refinement steps key on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gazekit.gaze import PipelineConfig, ScreenSpec
from gazekit.imgcore import ColorImage, Rect

# Skin tone chosen dead-center of the segmentation bounds (Y=160, Cb=120,
# Cr=150), converted to RGB. Gray noise moves only Y, never Cb/Cr, so the
# classification margin survives noisy renders.
SKIN_RGB = (190.844, 146.9636, 145.824)
SCLERA_INTENSITY = 235.0
IRIS_INTENSITY = 40.0
BACKGROUND_RGB = (60.0, 60.0, 60.0)


@dataclass(frozen=True)
class SynthEyeParams:
    """One isolated eye: dark disk on bright ground."""

    frame_size: tuple = (160, 120)  # (w, h)
    face_width: float = 240.0
    iris_center: tuple = (80.0, 60.0)
    iris_radius: float = 12.0
    sclera_intensity: float = SCLERA_INTENSITY
    iris_intensity: float = IRIS_INTENSITY
    eyelid_occlusion: float = 0.0  # fraction of the disk, from the top
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.frame_size
        cx, cy = self.iris_center
        r = self.iris_radius
        if self.iris_intensity >= self.sclera_intensity:
            raise ValueError("iris must be darker than sclera")
        if r <= 0:
            raise ValueError("iris_radius must be positive")
        if not (cx - r >= 0 and cy - r >= 0 and cx + r <= w - 1 and cy + r <= h - 1):
            raise ValueError("iris must lie inside the frame")
        if not (0.0 <= self.eyelid_occlusion <= 0.5):
            raise ValueError("eyelid_occlusion must be in [0, 0.5]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def _disk_alpha(xx, yy, cx, cy, r):
    """Coverage in [0,1] with a 1 px anti-aliasing band at the rim."""
    d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    return np.clip(r + 0.5 - d, 0.0, 1.0)


def render_synthetic_eye(p: SynthEyeParams):
    """Render one eye; ground truth is the iris center, exactly."""
    w, h = p.frame_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    gray = np.full((h, w), p.sclera_intensity)
    alpha = _disk_alpha(xx, yy, p.iris_center[0], p.iris_center[1], p.iris_radius)
    gray = gray * (1 - alpha) + p.iris_intensity * alpha
    if p.eyelid_occlusion > 0:
        lid_y = (p.iris_center[1] - p.iris_radius) + p.eyelid_occlusion * 2 * p.iris_radius
        gray[yy < lid_y] = p.sclera_intensity
    if p.noise_sigma > 0:
        rng = np.random.default_rng(p.seed)
        gray = gray + rng.normal(0.0, p.noise_sigma, gray.shape)
        gray = np.clip(gray, 0.0, 255.0)
    img = ColorImage(np.repeat(gray[:, :, None], 3, axis=2))
    return img, p.iris_center


@dataclass(frozen=True)
class SynthGazeRig:
    """Full-face rig: pupil = rest + gain * (target - screen center)."""

    screen: ScreenSpec = field(default_factory=lambda: ScreenSpec(1280, 720))
    gain: tuple = (0.04, 0.03)  # pupil px per screen px
    frame_size: tuple = (640, 480)
    face_center: tuple = (320.0, 230.0)
    face_axes: tuple = (130.0, 180.0)  # semi-axes
    eye_centers: tuple = ((260.0, 195.0), (380.0, 195.0))
    eye_half: tuple = (44.0, 16.0)  # lens half-width, half-height
    iris_radius: float = 12.0

    def __post_init__(self):
        if self.gain[0] == 0 or self.gain[1] == 0:
            raise ValueError("gain must be nonzero on both axes")

    @property
    def rest_pupil(self) -> tuple:
        """Left-eye iris rest position; the right eye is offset in lockstep."""
        return self.eye_centers[0]

    @property
    def corners(self) -> tuple:
        """Fixed (inner, outer) lens tip points of the left eye."""
        (cx, cy) = self.eye_centers[0]
        a = self.eye_half[0]
        return ((cx - a, cy), (cx + a, cy))

    def pupil_offset(self, target) -> tuple:
        scx, scy = self.screen.center
        return (
            self.gain[0] * (target[0] - scx),
            self.gain[1] * (target[1] - scy),
        )

    @property
    def face_rect(self) -> Rect:
        (cx, cy), (ax, ay) = self.face_center, self.face_axes
        return Rect(
            int(np.floor(cx - ax)),
            int(np.floor(cy - ay)),
            int(np.ceil(2 * ax)),
            int(np.ceil(2 * ay)),
        )

    @property
    def eye_rects(self) -> tuple:
        a, b = self.eye_half
        out = []
        for (cx, cy) in self.eye_centers:
            out.append(
                Rect(
                    int(np.floor(cx - a)),
                    int(np.floor(cy - b)),
                    int(np.ceil(2 * a)),
                    int(np.ceil(2 * b)),
                )
            )
        return tuple(out)


@dataclass(frozen=True)
class RigTruth:
    target: tuple
    pupils: tuple  # ((x, y) per eye)
    face_rect: Rect
    eye_rects: tuple


def _lens_alpha(xx, yy, cx, cy, a, b):
    """Two-arc lens coverage: intersection of two circles of radius R whose
    centers sit b above/below the lens center gives sharp lateral tips."""
    R = (a * a + b * b) / (2.0 * b)
    off = R - b
    d_up = np.sqrt((xx - cx) ** 2 + (yy - (cy + off)) ** 2)
    d_dn = np.sqrt((xx - cx) ** 2 + (yy - (cy - off)) ** 2)
    return np.clip(0.5 + np.minimum(R - d_up, R - d_dn), 0.0, 1.0)


def render_rig_frame(rig: SynthGazeRig, target, noise_sigma: float = 0.0, seed: int = 0):
    """Render a full face frame for one gaze target.

    Layers: dark background, skin ellipse, sclera lenses, iris disks
    clipped to the lenses (the lens boundary doubles as the eyelid). The
    returned truth carries the exact pupil positions.
    """
    tx, ty = target
    if not (0 <= tx <= rig.screen.width_px and 0 <= ty <= rig.screen.height_px):
        raise ValueError(f"target {target} outside screen")
    w, h = rig.frame_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    img = np.empty((h, w, 3))
    for c in range(3):
        img[:, :, c] = BACKGROUND_RGB[c]

    # face ellipse, anti-aliased via the normalized radial distance
    (fcx, fcy), (ax, ay) = rig.face_center, rig.face_axes
    f = np.sqrt(((xx - fcx) / ax) ** 2 + ((yy - fcy) / ay) ** 2)
    face_alpha = np.clip(0.5 + (1.0 - f) * min(ax, ay), 0.0, 1.0)
    for c in range(3):
        img[:, :, c] = img[:, :, c] * (1 - face_alpha) + SKIN_RGB[c] * face_alpha

    dx, dy = rig.pupil_offset(target)
    a, b = rig.eye_half
    pupils = []
    for (ecx, ecy) in rig.eye_centers:
        lens = _lens_alpha(xx, yy, ecx, ecy, a, b)
        for c in range(3):
            img[:, :, c] = img[:, :, c] * (1 - lens) + SCLERA_INTENSITY * lens
        px, py = ecx + dx, ecy + dy
        iris = _disk_alpha(xx, yy, px, py, rig.iris_radius) * lens
        for c in range(3):
            img[:, :, c] = img[:, :, c] * (1 - iris) + IRIS_INTENSITY * iris
        pupils.append((px, py))

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_sigma, (h, w))[:, :, None]
        img = np.clip(img, 0.0, 255.0)

    truth = RigTruth(
        (float(tx), float(ty)), tuple(pupils), rig.face_rect, rig.eye_rects
    )
    return ColorImage(img), truth


def rig_pipeline_config():
    """Scan configuration matched to the packaged rig cascade models.

    The rig face is a fixed 260 px ellipse and the lenses are fixed 88x32
    regions, so the model bands were fitted at a single window scale per
    detector; pinning the scan ranges to those scales is what keeps the
    band-pass stages selective.
    """
    return PipelineConfig(
        min_face_size=250, max_face_size=270, min_eye_size=125, max_eye_size=135
    )
