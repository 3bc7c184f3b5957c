"""Shared synthetic scenes, oracles, and rig plumbing for the test suite."""

import functools

import numpy as np

from gazekit.cascade import load_cascade
from gazekit.data import data_path
from gazekit.gaze import GazeSession, ScreenSpec, five_point_layout
from gazekit.harness.synth import (
    SynthEyeParams,
    SynthGazeRig,
    render_rig_frame,
    render_synthetic_eye,
    rig_pipeline_config,
)
from gazekit.imgcore import GradientField, GrayImage, to_grayscale
from gazekit.pupil import EyeWindow


def gray(values) -> GrayImage:
    return GrayImage(np.asarray(values, dtype=np.float64))


def disk_image(h, w, cx, cy, r, fg=40.0, bg=235.0) -> GrayImage:
    """Anti-aliased dark disk on a bright ground."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    d = np.hypot(xx - cx, yy - cy)
    alpha = np.clip(r + 0.5 - d, 0.0, 1.0)
    return GrayImage(bg + (fg - bg) * alpha)


def circle_edge_map(h, w, cx, cy, r, erase_center=None, erase_span=0.0):
    """Integer outline pixels of a circle plus an analytic radial gradient.

    erase_center/erase_span (radians) knock out an arc; with image y down,
    -pi/2 is the top of the circle.
    """
    n = max(720, int(16 * r))
    theta = np.linspace(-np.pi, np.pi, n, endpoint=False)
    if erase_center is not None and erase_span > 0:
        away = np.angle(np.exp(1j * (theta - erase_center)))
        theta = theta[np.abs(away) > erase_span / 2.0]
    xs = np.rint(cx + r * np.cos(theta)).astype(int)
    ys = np.rint(cy + r * np.sin(theta)).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    plane = np.zeros((h, w), dtype=np.uint8)
    plane[ys[ok], xs[ok]] = 1
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    grad = GradientField(xx - cx, yy - cy)
    return plane, grad


def circle_points(cx, cy, r, n, phase=0.0):
    theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False) + phase
    return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])


def brute_rect_sum(pixels, x, y, w, h) -> float:
    return float(np.sum(np.asarray(pixels, dtype=np.float64)[y : y + h, x : x + w]))


def eye_window(params: SynthEyeParams) -> EyeWindow:
    img, _ = render_synthetic_eye(params)
    return EyeWindow(to_grayscale(img), face_width=params.face_width)


def sample_eye_cases(rng, n):
    """Random eyes spanning the documented difficulty range."""
    cases = []
    for _ in range(n):
        r = float(rng.uniform(8.0, 16.0))
        cx = 80.0 + float(rng.uniform(-6.0, 6.0))
        cy = 60.0 + float(rng.uniform(-6.0, 6.0))
        cases.append(
            SynthEyeParams(
                face_width=r / 0.055,  # centers the radius prior band on r
                iris_center=(cx, cy),
                iris_radius=r,
                eyelid_occlusion=float(rng.uniform(0.0, 0.3)),
                noise_sigma=float(rng.uniform(0.0, 8.0)),
                seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return cases


@functools.lru_cache(maxsize=1)
def rig_models():
    return (
        load_cascade(data_path("models/rig_face.xml")),
        load_cascade(data_path("models/rig_eye.xml")),
    )


def make_rig_session(mode="affine", rig=None, alpha=1.0):
    """A five-point-calibrated session on the synthetic rig."""
    if rig is None:
        rig = SynthGazeRig()
    face_model, eye_model = rig_models()
    session = GazeSession(
        rig.screen,
        mode=mode,
        face_model=face_model,
        eye_model=eye_model,
        alpha=alpha,
        config=rig_pipeline_config(),
    )
    for target in five_point_layout(rig.screen):
        frame, _ = render_rig_frame(rig, target)
        if not session.add_calibration_point(target, frame):
            raise AssertionError(f"rig calibration point {target} not measured")
    session.finish_calibration()
    return rig, session


def rand_targets(rng, screen: ScreenSpec, n):
    xs = rng.uniform(0.0, screen.width_px, n)
    ys = rng.uniform(0.0, screen.height_px, n)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def stock_cascade_path():
    """Path to an installed stock frontal-face cascade, or None.

    Honors GAZEKIT_STOCK_CASCADE, then falls back to the usual install
    locations. Tests that need the published model skip when absent.
    """
    import glob
    import os

    override = os.environ.get("GAZEKIT_STOCK_CASCADE")
    if override:
        return override if os.path.exists(override) else None
    candidates = []
    try:
        import cv2

        candidates += [
            os.path.join(cv2.data.haarcascades, name)
            for name in (
                "haarcascade_frontalface_alt.xml",
                "haarcascade_frontalface_alt2.xml",
                "haarcascade_frontalface_default.xml",
            )
        ]
    except ImportError:
        pass
    candidates += glob.glob(
        "/usr/share/opencv*/haarcascades/haarcascade_frontalface*.xml"
    )
    for c in candidates:
        if os.path.exists(c):
            return c
    return None
