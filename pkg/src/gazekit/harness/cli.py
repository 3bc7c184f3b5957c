"""Command-line front end.

Offline workflow: `synth` renders a rig dataset, `calibrate` fits a mapper
from a (target, frame) manifest, `track` replays frames through a saved
calibration, `evaluate`/`replay` recompute error reports from estimate
CSVs. `detect-*` expose the individual detectors on single images and
`serve` runs the live WebSocket service.

Exit codes: 0 success, 1 usage error, 2 input or model error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import pathlib
import sys
import traceback
from xml.etree.ElementTree import ParseError

import numpy as np

from gazekit.cascade import detect_multiscale, load_cascade
from gazekit.data import data_path
from gazekit.gaze import (
    DecayState,
    GazeSession,
    PipelineConfig,
    ScreenSpec,
    UncalibratedError,
    _eye_rects_from_cascade,
    five_point_layout,
    run_pipeline1,
    run_pipeline2,
)
from gazekit.harness import images
from gazekit.harness.fixture import format_report, replay_fixture
from gazekit.harness.synth import SynthGazeRig, render_rig_frame, rig_pipeline_config
from gazekit.imgcore import ColorImage, to_grayscale
from gazekit.pupil import EyeWindow, detect_pupil, detect_pupil_ocem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

# face-width prior for bare eye images: a cascade eye rect spans roughly
# half a face, so a stand-alone crop is treated as 1/2.2 of one
PUPIL_FACE_WIDTH_FACTOR = 2.2

SYNTH_TRACK_FRAMES = 20

MANIFEST_HEADER = ["target_x", "target_y", "frame"]


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; this CLI wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _screen_type(text: str):
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected WxH like 1280x720, got {text!r}"
        ) from None


def _gray(img):
    return to_grayscale(img) if isinstance(img, ColorImage) else img


def _rect_json(rect, det=None):
    out = {"x": rect.x, "y": rect.y, "w": rect.w, "h": rect.h}
    if det is not None:
        out["neighbors"] = det.neighbors
        out["score"] = det.score
    return out


def _models_and_config(args):
    """Cascade models plus a scan config matched to them.

    The packaged models are single-scale rig detectors and get the rig
    scan ranges; user-supplied models get the generic defaults.
    """
    face_path = getattr(args, "cascade_face", None)
    eye_path = getattr(args, "cascade_eye", None)
    face = load_cascade(face_path or data_path("models/rig_face.xml"))
    eye = load_cascade(eye_path or data_path("models/rig_eye.xml"))
    config = PipelineConfig() if (face_path or eye_path) else rig_pipeline_config()
    return face, eye, config


def _screen_from_args(args) -> ScreenSpec:
    w, h = args.screen
    return ScreenSpec(w, h, args.mm_per_px)


def _read_manifest(path, require_targets: bool):
    """(target or None, frame path) rows; paths resolve against the manifest."""
    base = pathlib.Path(path).parent
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header == MANIFEST_HEADER:
            has_targets = True
        elif header == ["frame"] and not require_targets:
            has_targets = False
        else:
            raise ValueError(
                f"{path}: expected header {','.join(MANIFEST_HEADER)}"
                + ("" if require_targets else " or frame")
                + f", got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if has_targets:
                if len(row) != 3:
                    raise ValueError(f"{path}: line {lineno}: expected 3 fields")
                try:
                    target = (float(row[0]), float(row[1]))
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: non-numeric target") from None
                rows.append((target, base / row[2]))
            else:
                if len(row) != 1:
                    raise ValueError(f"{path}: line {lineno}: expected 1 field")
                rows.append((None, base / row[0]))
    if not rows:
        raise ValueError(f"{path}: manifest has no rows")
    return rows


def cmd_detect_face(args) -> int:
    face_model, _, config = _models_and_config(args)
    img = images.load_image(args.input)
    gray = _gray(img)
    dets = detect_multiscale(
        face_model,
        gray,
        scale_factor=config.scale_factor,
        min_neighbors=config.min_neighbors,
        min_size=config.min_face_size,
        max_size=config.max_face_size,
    )
    print(json.dumps({"faces": [_rect_json(d.rect, d) for d in dets]}, indent=2))
    if args.output:
        out = images.ensure_color(img)
        for d in dets:
            images.draw_rect(out, d.rect)
        images.save_image(args.output, out)
    return EXIT_OK


def cmd_detect_eyes(args) -> int:
    face_model, eye_model, config = _models_and_config(args)
    img = images.load_image(args.input)
    gray = _gray(img)
    dets = detect_multiscale(
        face_model,
        gray,
        scale_factor=config.scale_factor,
        min_neighbors=config.min_neighbors,
        min_size=config.min_face_size,
        max_size=config.max_face_size,
    )
    face = dets[0].rect if dets else None
    eyes = _eye_rects_from_cascade(gray, face, eye_model, config) if face else []
    print(
        json.dumps(
            {
                "face": _rect_json(face) if face else None,
                "eyes": [_rect_json(r) for r in eyes],
            },
            indent=2,
        )
    )
    if args.output:
        out = images.ensure_color(img)
        if face:
            images.draw_rect(out, face)
        for r in eyes:
            images.draw_rect(out, r, color=(64, 64, 255))
        images.save_image(args.output, out)
    return EXIT_OK


def cmd_detect_pupil(args) -> int:
    img = images.load_image(args.input)
    gray = _gray(img)
    window = EyeWindow(gray, origin=(0, 0), face_width=PUPIL_FACE_WIDTH_FACTOR * gray.width)
    detect = detect_pupil if args.method == "hough" else detect_pupil_ocem
    est = detect(window)
    doc = None
    if est is not None:
        doc = {
            "x": est.center[0],
            "y": est.center[1],
            "confidence": est.confidence,
            "method": est.method,
        }
    print(json.dumps({"pupil": doc}, indent=2))
    if args.output:
        out = images.ensure_color(img)
        if est is not None:
            images.draw_cross(out, est.center)
        images.save_image(args.output, out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    face_model, eye_model, config = _models_and_config(args)
    session = GazeSession(
        _screen_from_args(args),
        mode=args.method,
        face_model=face_model,
        eye_model=eye_model,
        alpha=args.alpha,
        config=config,
    )
    rows = _read_manifest(args.input, require_targets=True)
    misses = []
    for target, frame_path in rows:
        frame = images.ensure_color(images.load_image(frame_path))
        if not session.add_calibration_point(target, frame):
            misses.append(str(frame_path))
    for path in misses:
        print(f"warning: no features in {path}, point skipped", file=sys.stderr)
    session.finish_calibration()
    session.save_calibration(args.output)
    print(
        f"calibrated mode={args.method} from {len(session.pairs)}/{len(rows)} points -> {args.output}"
    )
    return EXIT_OK


def cmd_track(args) -> int:
    session = GazeSession(ScreenSpec(1280, 720))
    session.load_calibration(args.calibration)
    face_model, eye_model, config = _models_and_config(args)
    session.face_model = face_model
    session.eye_model = eye_model
    session.config = config
    if args.alpha is not None:
        session.alpha = args.alpha
        session.decay = DecayState(session.decay.estimate, args.alpha)
    run = run_pipeline1 if session.mode == "affine" else run_pipeline2
    rows = _read_manifest(args.input, require_targets=False)
    has_targets = rows[0][0] is not None
    out_rows = []
    errors = []
    misses = 0
    for target, frame_path in rows:
        frame = images.ensure_color(images.load_image(frame_path))
        est = run(frame, session)
        if est is None:
            misses += 1
            continue
        if has_targets:
            out_rows.append([repr(target[0]), repr(target[1]), repr(est[0]), repr(est[1])])
            errors.append(float(np.hypot(est[0] - target[0], est[1] - target[1])))
        else:
            out_rows.append([str(frame_path), repr(est[0]), repr(est[1])])
    if args.output:
        with open(args.output, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["actual_x", "actual_y", "est_x", "est_y"] if has_targets else ["frame", "est_x", "est_y"]
            )
            writer.writerows(out_rows)
    summary = f"tracked {len(out_rows)}/{len(rows)} frames ({misses} misses)"
    if errors:
        summary += f", mean error {float(np.mean(errors)):.2f} px"
    print(summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    screen = _screen_from_args(args)
    report = replay_fixture(args.input, screen)
    print(format_report(report))
    if args.output:
        with open(args.output, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["actual_x", "actual_y", "est_x", "est_y", "error_px", "error_mm"])
            for r in report.records:
                writer.writerow(
                    [repr(r.actual[0]), repr(r.actual[1]), repr(r.estimated[0]),
                     repr(r.estimated[1]), repr(r.error_px), repr(r.error_mm)]
                )
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = pathlib.Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    w, h = args.screen
    rig = SynthGazeRig(screen=ScreenSpec(w, h, args.mm_per_px))
    rng = np.random.default_rng(args.seed)

    def write_set(name, targets):
        manifest = out_dir / f"{name}.csv"
        with open(manifest, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(MANIFEST_HEADER)
            for i, target in enumerate(targets):
                frame_name = f"{name}_{i:02d}.ppm"
                frame, _ = render_rig_frame(rig, target)
                images.save_image(out_dir / frame_name, frame)
                writer.writerow([repr(target[0]), repr(target[1]), frame_name])
        return manifest

    cal = write_set("calibration", five_point_layout(rig.screen))
    track_targets = [
        (float(rng.uniform(0, w)), float(rng.uniform(0, h)))
        for _ in range(SYNTH_TRACK_FRAMES)
    ]
    frames = write_set("frames", track_targets)
    print(f"wrote {cal} and {frames} (seed {args.seed}, screen {w}x{h})")
    return EXIT_OK


def cmd_replay(args) -> int:
    screen = _screen_from_args(args)
    if args.input:
        paths = [pathlib.Path(args.input)]
    else:
        paths = [
            data_path("fixtures/pipeline1_targets.csv"),
            data_path("fixtures/pipeline1_grid_mm.csv"),
        ]
    for i, path in enumerate(paths):
        if i:
            print()
        print(f"== {path.name}")
        print(format_report(replay_fixture(path, screen)))
    return EXIT_OK


def cmd_serve(args) -> int:
    # only serve needs the socket stack; keep the other commands import-light
    from gazekit.harness.service import ServeConfig, serve

    config = ServeConfig(
        port=args.port,
        screen=_screen_from_args(args),
        mode=args.method,
        alpha=args.alpha,
        face_model_path=args.cascade_face,
        eye_model_path=args.cascade_eye,
    )
    try:
        serve(config)
    except KeyboardInterrupt:
        print("interrupted, shutting down", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazekit", description=__doc__.split("\n\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    def opt_cascades(p):
        p.add_argument("--cascade-face", metavar="XML", help="face cascade model (default: packaged)")
        p.add_argument("--cascade-eye", metavar="XML", help="eye cascade model (default: packaged)")

    def opt_screen(p):
        p.add_argument("--screen", type=_screen_type, default=(1280, 720), metavar="WxH",
                       help="screen size in pixels (default 1280x720)")
        p.add_argument("--mm-per-px", type=float, default=0.22, metavar="F",
                       help="millimetres per screen pixel (default 0.22)")

    p = add("detect-face", cmd_detect_face, "find face rectangles in one image")
    p.add_argument("--input", required=True, metavar="IMG")
    p.add_argument("--output", metavar="IMG", help="write a copy with boxes drawn")
    opt_cascades(p)

    p = add("detect-eyes", cmd_detect_eyes, "find the face and both eye rectangles")
    p.add_argument("--input", required=True, metavar="IMG")
    p.add_argument("--output", metavar="IMG")
    opt_cascades(p)

    p = add("detect-pupil", cmd_detect_pupil, "locate the pupil in an eye image")
    p.add_argument("--input", required=True, metavar="IMG")
    p.add_argument("--output", metavar="IMG")
    p.add_argument("--method", choices=("hough", "ocem"), default="hough")

    p = add("calibrate", cmd_calibrate, "fit a gaze mapper from a target/frame manifest")
    p.add_argument("--input", required=True, metavar="CSV", help="manifest: target_x,target_y,frame")
    p.add_argument("--output", required=True, metavar="JSON", help="calibration file to write")
    p.add_argument("--method", choices=("affine", "ratio"), default="affine")
    p.add_argument("--alpha", type=float, default=0.1, help="decay factor stored with the calibration")
    opt_screen(p)
    opt_cascades(p)

    p = add("track", cmd_track, "replay frames through a saved calibration")
    p.add_argument("--input", required=True, metavar="CSV", help="manifest: frame paths, targets optional")
    p.add_argument("--calibration", required=True, metavar="JSON")
    p.add_argument("--output", metavar="CSV", help="estimate rows to write")
    p.add_argument("--alpha", type=float, help="override the stored decay factor")
    opt_cascades(p)

    p = add("evaluate", cmd_evaluate, "error report from an actual/estimate CSV")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--output", metavar="CSV", help="write per-record errors as CSV")
    opt_screen(p)

    p = add("synth", cmd_synth, "render a synthetic rig dataset with ground truth")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=0)
    opt_screen(p)

    p = add("replay", cmd_replay, "replay the shipped fixtures (or a given one)")
    p.add_argument("--input", metavar="CSV", help="fixture to replay instead of the shipped ones")
    opt_screen(p)

    p = add("serve", cmd_serve, "run the WebSocket session service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--method", choices=("affine", "ratio"), default="affine",
                   help="pipeline run for connections that do not choose one")
    p.add_argument("--alpha", type=float, default=0.1)
    opt_screen(p)
    opt_cascades(p)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (OSError, ValueError, KeyError, ParseError, UncalibratedError) as e:
        print(f"gazekit: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
