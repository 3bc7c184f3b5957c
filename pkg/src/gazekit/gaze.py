"""Feature-to-screen gaze mapping.

Two calibrated pipelines: corner-normalized pupil positions through an
affine map with temporal decay smoothing, and raw OCEM pupil positions
through a per-axis movement-ratio map without smoothing. Shared error
metrics and the 3x3 screen-grid evaluation live here too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from gazekit import cascade as _cascade
from gazekit import pupil as _pupil
from gazekit import skinmodel as _skinmodel
from gazekit.imgcore import ColorImage, GrayImage, Rect, harris_corners, to_grayscale

DEFAULT_ALPHA = 0.1
DEFAULT_MM_PER_PX = 0.22
CORNER_MARGIN = 0.25  # lateral fraction of the eye rect searched for corners


class UncalibratedError(RuntimeError):
    """A pipeline was run before its session finished calibration."""


@dataclass(frozen=True)
class ScreenSpec:
    width_px: int
    height_px: int
    mm_per_px: float = DEFAULT_MM_PER_PX

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0 or self.mm_per_px <= 0:
            raise ValueError("screen dimensions and mm_per_px must be positive")

    @property
    def center(self):
        return (self.width_px / 2.0, self.height_px / 2.0)


@dataclass(frozen=True)
class GazeSample:
    t: int
    pupil_l: tuple = None
    pupil_r: tuple = None
    corners_l: tuple = None  # (inner, outer)
    corners_r: tuple = None

    def __post_init__(self):
        for corners in (self.corners_l, self.corners_r):
            if corners is not None:
                inner, outer = corners
                if tuple(inner) == tuple(outer):
                    raise ValueError("corner pair must be distinct points")


@dataclass(frozen=True)
class DecayState:
    estimate: tuple
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        ex, ey = self.estimate
        if not (np.isfinite(ex) and np.isfinite(ey)):
            raise ValueError("estimate must be finite")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class CalibrationSet:
    pairs: tuple  # ((screen point, feature 2-vector), ...)
    rest_index: int = 0

    def __post_init__(self):
        if not (0 <= self.rest_index < len(self.pairs)):
            raise ValueError("rest_index out of range")


@dataclass(frozen=True)
class GazeMapper:
    mode: str  # "ratio" | "affine"
    screen: ScreenSpec
    ratio: tuple = None  # (rx, ry)
    rest_feature: tuple = None
    rest_screen: tuple = None
    affine: np.ndarray = None  # 2x3

    def __post_init__(self):
        if self.mode == "ratio":
            if self.ratio is None or self.rest_feature is None or self.rest_screen is None:
                raise ValueError("ratio mapper needs ratio, rest_feature, rest_screen")
            if not np.all(np.isfinite(self.ratio)):
                raise ValueError("ratio must be finite")
        elif self.mode == "affine":
            if self.affine is None or self.affine.shape != (2, 3):
                raise ValueError("affine mapper needs a 2x3 matrix")
            if not np.all(np.isfinite(self.affine)):
                raise ValueError("affine matrix must be finite")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class EvalRecord:
    actual: tuple
    estimated: tuple
    error_px: float
    error_mm: float


def decay_update(s: DecayState, e_current) -> DecayState:
    """E_{t+1} = alpha * E_current + (1 - alpha) * E_t, per axis."""
    ex, ey = e_current
    if not (np.isfinite(ex) and np.isfinite(ey)):
        raise ValueError("current estimate must be finite")
    px, py = s.estimate
    a = s.alpha
    return replace(s, estimate=(a * ex + (1 - a) * px, a * ey + (1 - a) * py))


def normalized_pupil_position(pupil, inner, outer):
    """Pupil position in the corner-axis frame, scale-free.

    u is the along-axis fraction (0 at inner, 1 at outer); v is the signed
    perpendicular offset in units of the corner distance.
    """
    p = np.asarray(pupil, dtype=np.float64)
    a = np.asarray(inner, dtype=np.float64)
    b = np.asarray(outer, dtype=np.float64)
    axis = b - a
    d2 = float(axis @ axis)
    if d2 <= 0:
        raise ValueError("corners must be distinct points")
    rel = p - a
    u = float(rel @ axis) / d2
    v = float(axis[0] * rel[1] - axis[1] * rel[0]) / d2
    return (u, v)


def calibrate(cal: CalibrationSet, mode: str, screen: ScreenSpec) -> GazeMapper:
    """Fit a feature-to-screen map from calibration pairs.

    ratio: per-axis mean |screen delta| / mean |feature delta| relative to
    the rest pair, signed by the screen/feature covariance on that axis. An
    axis that was exercised on screen but shows no feature movement is
    degenerate. affine: least-squares 2x3 map from (u, v, 1).
    """
    pairs = [(np.asarray(s, float), np.asarray(f, float)) for s, f in cal.pairs]
    if mode == "ratio":
        if len(pairs) < 2:
            raise ValueError("ratio mode needs at least 2 pairs")
        rest_screen, rest_feature = pairs[cal.rest_index]
        ds = np.stack([s - rest_screen for i, (s, f) in enumerate(pairs) if i != cal.rest_index])
        df = np.stack([f - rest_feature for i, (s, f) in enumerate(pairs) if i != cal.rest_index])
        ratio = []
        for axis in (0, 1):
            mean_s = float(np.mean(np.abs(ds[:, axis])))
            mean_f = float(np.mean(np.abs(df[:, axis])))
            if mean_f == 0.0:
                if mean_s == 0.0:
                    # axis never exercised: pin it to the rest position
                    ratio.append(0.0)
                    continue
                raise ValueError(f"zero mean feature delta on axis {axis}")
            sign = 1.0 if float(np.sum(ds[:, axis] * df[:, axis])) >= 0 else -1.0
            ratio.append(sign * mean_s / mean_f)
        return GazeMapper(
            "ratio",
            screen,
            ratio=(ratio[0], ratio[1]),
            rest_feature=tuple(rest_feature),
            rest_screen=tuple(rest_screen),
        )
    if mode == "affine":
        if len(pairs) < 3:
            raise ValueError("affine mode needs at least 3 pairs")
        A = np.stack([np.array([f[0], f[1], 1.0]) for _, f in pairs])
        if np.linalg.matrix_rank(A) < 3:
            raise ValueError("rank-deficient calibration features (collinear)")
        targets = np.stack([s for s, _ in pairs])
        coeffs, *_ = np.linalg.lstsq(A, targets, rcond=None)
        return GazeMapper("affine", screen, affine=coeffs.T)
    raise ValueError(f"unknown mode {mode!r}")


def estimate_gaze(m: GazeMapper, feature):
    """Map a feature to a screen point, clamped to the screen rectangle."""
    f = np.asarray(feature, dtype=np.float64)
    if m.mode == "ratio":
        fx, fy = f - np.asarray(m.rest_feature)
        x = m.rest_screen[0] + m.ratio[0] * fx
        y = m.rest_screen[1] + m.ratio[1] * fy
    else:
        x, y = m.affine @ np.array([f[0], f[1], 1.0])
    x = min(max(float(x), 0.0), float(m.screen.width_px))
    y = min(max(float(y), 0.0), float(m.screen.height_px))
    return (x, y)


def gaze_error(act, est, screen: ScreenSpec) -> EvalRecord:
    """Euclidean error in pixels and millimetres."""
    ax, ay = act
    ex, ey = est
    err_px = float(np.hypot(ax - ex, ay - ey))
    return EvalRecord((float(ax), float(ay)), (float(ex), float(ey)), err_px, err_px * screen.mm_per_px)


@dataclass(frozen=True)
class CellStat:
    mean_mm: float
    std_mm: float
    count: int


@dataclass(frozen=True)
class GridReport:
    cells: dict  # {(cell_x, cell_y): CellStat}; empty cells absent
    overall_mean_px: float


def evaluate_grid(records, screen: ScreenSpec) -> GridReport:
    """Bucket records into the 3x3 screen grid by their actual point.

    Cell index = floor(3 * coordinate / extent), clamped to 2 so the far
    edges land in the last cell. Per-cell mean and population standard
    deviation of the mm error; overall mean is in pixels.
    """
    buckets = {}
    for rec in records:
        ax, ay = rec.actual
        if not (0 <= ax <= screen.width_px and 0 <= ay <= screen.height_px):
            raise ValueError(f"actual point {rec.actual} outside screen")
        cx = min(2, int(3 * ax / screen.width_px))
        cy = min(2, int(3 * ay / screen.height_px))
        buckets.setdefault((cx, cy), []).append(rec)
    cells = {}
    for key, recs in buckets.items():
        errs = np.array([r.error_mm for r in recs])
        cells[key] = CellStat(float(errs.mean()), float(errs.std()), len(recs))
    overall = float(np.mean([r.error_px for r in records])) if records else 0.0
    return GridReport(cells, overall)


@dataclass
class PipelineConfig:
    scale_factor: float = 1.1
    min_neighbors: int = 2
    min_face_size: int = 60
    max_face_size: int = 0
    min_eye_size: int = 16
    max_eye_size: int = 0
    pupil: _pupil.PupilConfig = field(default_factory=_pupil.PupilConfig)


def _eye_rects_from_cascade(gray, face_rect, eye_model, config):
    """Scan the upper face band for eyes, one per lateral half.

    Splitting near the face midline keeps windows from straddling both
    eyes and chain-merging into a single group, and makes the
    left-to-right result automatic. The halves overlap (each spans 54%
    of the band) so that an eye sitting at ~30% of the face width still
    has room on both sides for the largest scan windows; a hard split
    truncates the scan grid against the crop edge and drags the grouped
    rect toward the midline.
    """
    band = Rect(
        face_rect.x,
        face_rect.y,
        face_rect.w,
        max(1, int(round(face_rect.h * 0.6))),
    )
    half_w = max(1, int(round(band.w * 0.54)))
    out = []
    for hx in (band.x, band.x2 - half_w):
        crop = GrayImage(gray.pixels[band.y : band.y2, hx : hx + half_w])
        dets = _cascade.detect_multiscale(
            eye_model,
            crop,
            scale_factor=config.scale_factor,
            min_neighbors=config.min_neighbors,
            min_size=config.min_eye_size,
            max_size=config.max_eye_size,
        )
        if dets:
            r = dets[0].rect
            out.append(Rect(hx + r.x, band.y + r.y, r.w, r.h))
    out.sort(key=lambda r: r.x)
    return out


def _find_eye_corners(gray, eye_rect):
    """Extremal Harris corner in each lateral 25% margin of the eye rect.

    The true corners are the lateral extremes of the eye opening, so
    among qualifying candidates the outermost one per side wins: the
    boundary of an off-center iris also reads as corners, but those
    always sit inboard of the eye's own tips. Qualifying means within a
    margin and at least a twentieth of the strongest response in the
    crop, which drops faint artifacts where image structure meets the
    crop border while keeping the tips, whose response runs about a
    tenth of an extreme iris corner's. Returns ((left, right) in frame
    coordinates) or None when a side is empty.
    """
    crop = GrayImage(gray.pixels[eye_rect.y : eye_rect.y2, eye_rect.x : eye_rect.x2])
    corners = harris_corners(crop, min_dist=3)
    if not corners:
        return None
    floor = 0.05 * max(resp for _, resp in corners)
    margin = CORNER_MARGIN * eye_rect.w
    left_best = None
    right_best = None
    for (x, y), resp in corners:
        if resp < floor:
            continue
        if x <= margin and (left_best is None or x < left_best[0][0]):
            left_best = ((x, y), resp)
        if x >= eye_rect.w - margin and (right_best is None or x > right_best[0][0]):
            right_best = ((x, y), resp)
    if left_best is None or right_best is None:
        return None
    lx, ly = left_best[0]
    rx, ry = right_best[0]
    return (
        (eye_rect.x + lx, eye_rect.y + ly),
        (eye_rect.x + rx, eye_rect.y + ry),
    )


class GazeSession:
    """Single-user session: calibration, mapping, and decay state.

    mode "affine" runs the corner-normalized cascade pipeline with decay
    smoothing; mode "ratio" runs the OCEM pipeline without smoothing. All
    updates must come from one logical thread.
    """

    def __init__(
        self,
        screen: ScreenSpec,
        mode: str = "affine",
        face_model=None,
        eye_model=None,
        alpha: float = DEFAULT_ALPHA,
        config: PipelineConfig | None = None,
    ):
        if mode not in ("affine", "ratio"):
            raise ValueError(f"unknown mode {mode!r}")
        self.screen = screen
        self.mode = mode
        self.face_model = face_model
        self.eye_model = eye_model
        self.alpha = alpha
        self.config = config or PipelineConfig()
        self.pairs = []
        self.mapper = None
        self.decay = None
        self.frame_index = 0
        self.samples = []
        self.last_confidence = 0.0  # mean pupil confidence of the last hit

    @property
    def calibrated(self) -> bool:
        return self.mapper is not None

    def extract_feature(self, frame: ColorImage):
        """The mode's feature vector for one frame, or None."""
        if self.mode == "affine":
            return self._affine_feature(frame)
        return self._ratio_feature(frame)

    def add_calibration_point(self, target, frame: ColorImage) -> bool:
        """Measure the feature for a shown target; False when nothing seen."""
        feature = self.extract_feature(frame)
        if feature is None:
            return False
        self.pairs.append((tuple(target), tuple(feature)))
        return True

    def add_calibration_pair(self, target, feature) -> None:
        self.pairs.append((tuple(target), tuple(feature)))

    def finish_calibration(self) -> GazeMapper:
        cal = CalibrationSet(tuple(self.pairs), rest_index=0)
        self.mapper = calibrate(cal, self.mode, self.screen)
        self.decay = DecayState(self.screen.center, self.alpha)
        return self.mapper

    def _face_rect(self, gray):
        if self.face_model is not None:
            dets = _cascade.detect_multiscale(
                self.face_model,
                gray,
                scale_factor=self.config.scale_factor,
                min_neighbors=self.config.min_neighbors,
                min_size=self.config.min_face_size,
                max_size=self.config.max_face_size,
            )
            if dets:
                return dets[0].rect
            return None
        return None

    def _affine_feature(self, frame: ColorImage):
        gray = to_grayscale(frame)
        face = self._face_rect(gray)
        if face is None:
            return None
        if self.eye_model is None:
            return None
        eye_rects = _eye_rects_from_cascade(gray, face, self.eye_model, self.config)
        if not eye_rects:
            return None
        features = []
        pupils = []
        corner_log = []
        confs = []
        for rect in eye_rects:
            window = _pupil.EyeWindow(
                GrayImage(gray.pixels[rect.y : rect.y2, rect.x : rect.x2]),
                origin=(rect.x, rect.y),
                face_width=float(face.w),
            )
            est = _pupil.detect_pupil(window, self.config.pupil)
            if est is None:
                continue
            corners = _find_eye_corners(gray, rect)
            if corners is None:
                continue
            left, right = corners
            features.append(normalized_pupil_position(est.center, left, right))
            pupils.append(est.center)
            corner_log.append((left, right))
            confs.append(est.confidence)
        if not features:
            return None
        self.last_confidence = float(np.mean(confs))
        self._log_sample(pupils, corner_log)
        feats = np.asarray(features)
        return tuple(feats.mean(axis=0))

    def _eye_rects_any(self, frame: ColorImage, gray):
        """Cascade eyes when models are present, skin-model holes otherwise."""
        face = self._face_rect(gray)
        if face is not None and self.eye_model is not None:
            rects = _eye_rects_from_cascade(gray, face, self.eye_model, self.config)
            if rects:
                return rects, float(face.w)
        region = _skinmodel.locate_face(frame)
        if region is not None and region.eyes:
            return list(region.eyes), float(region.face.w)
        return [], 0.0

    def _ratio_feature(self, frame: ColorImage):
        gray = to_grayscale(frame)
        eye_rects, face_width = self._eye_rects_any(frame, gray)
        if not eye_rects:
            return None
        pupils = []
        confs = []
        for rect in eye_rects:
            window = _pupil.EyeWindow(
                GrayImage(gray.pixels[rect.y : rect.y2, rect.x : rect.x2]),
                origin=(rect.x, rect.y),
                face_width=face_width,
            )
            est = _pupil.detect_pupil_ocem(window, self.config.pupil)
            if est is None:
                continue
            pupils.append(est.center)
            confs.append(est.confidence)
        if not pupils:
            return None
        self.last_confidence = float(np.mean(confs))
        self._log_sample(pupils, [])
        arr = np.asarray(pupils)
        return tuple(arr.mean(axis=0))

    def _log_sample(self, pupils, corners):
        sample = GazeSample(
            self.frame_index,
            pupil_l=tuple(pupils[0]) if len(pupils) > 0 else None,
            pupil_r=tuple(pupils[1]) if len(pupils) > 1 else None,
            corners_l=corners[0] if len(corners) > 0 else None,
            corners_r=corners[1] if len(corners) > 1 else None,
        )
        self.samples.append(sample)
        if len(self.samples) > 256:
            del self.samples[:-256]

    def save_calibration(self, path) -> None:
        if self.mapper is None:
            raise UncalibratedError("nothing to save: session not calibrated")
        doc = {
            "version": 1,
            "mode": self.mode,
            "screen": {
                "width_px": self.screen.width_px,
                "height_px": self.screen.height_px,
                "mm_per_px": self.screen.mm_per_px,
            },
            "alpha": self.alpha,
            "pairs": [
                {"screen": list(s), "feature": list(f)} for s, f in self.pairs
            ],
        }
        if self.mapper.mode == "ratio":
            doc["mapper"] = {
                "ratio": list(self.mapper.ratio),
                "rest_feature": list(self.mapper.rest_feature),
                "rest_screen": list(self.mapper.rest_screen),
            }
        else:
            doc["mapper"] = {"affine": [list(row) for row in self.mapper.affine]}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")

    def load_calibration(self, path) -> None:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported calibration version {doc.get('version')!r}")
        scr = doc["screen"]
        self.screen = ScreenSpec(scr["width_px"], scr["height_px"], scr["mm_per_px"])
        self.mode = doc["mode"]
        self.alpha = float(doc.get("alpha", DEFAULT_ALPHA))
        self.pairs = [
            (tuple(p["screen"]), tuple(p["feature"])) for p in doc.get("pairs", [])
        ]
        m = doc["mapper"]
        if self.mode == "ratio":
            self.mapper = GazeMapper(
                "ratio",
                self.screen,
                ratio=tuple(m["ratio"]),
                rest_feature=tuple(m["rest_feature"]),
                rest_screen=tuple(m["rest_screen"]),
            )
        else:
            self.mapper = GazeMapper(
                "affine", self.screen, affine=np.asarray(m["affine"], dtype=np.float64)
            )
        self.decay = DecayState(self.screen.center, self.alpha)


def run_pipeline1(frame: ColorImage, session: GazeSession):
    """Cascade + Hough + corners + affine map + decay. None on any miss."""
    if session.mapper is None or session.mapper.mode != "affine":
        raise UncalibratedError("pipeline 1 needs a finished affine calibration")
    session.frame_index += 1
    feature = session._affine_feature(frame)
    if feature is None:
        return None
    instant = estimate_gaze(session.mapper, feature)
    session.decay = decay_update(session.decay, instant)
    return session.decay.estimate


def run_pipeline2(frame: ColorImage, session: GazeSession):
    """Eye regions + OCEM + ratio map; no temporal smoothing."""
    if session.mapper is None or session.mapper.mode != "ratio":
        raise UncalibratedError("pipeline 2 needs a finished ratio calibration")
    session.frame_index += 1
    feature = session._ratio_feature(frame)
    if feature is None:
        return None
    return estimate_gaze(session.mapper, feature)


def five_point_layout(screen: ScreenSpec, inset: float = 0.10):
    """Center first, then the four corner points inset by the given fraction."""
    w, h = screen.width_px, screen.height_px
    dx, dy = inset * w, inset * h
    return [
        (w / 2.0, h / 2.0),
        (dx, dy),
        (w - dx, dy),
        (dx, h - dy),
        (w - dx, h - dy),
    ]
