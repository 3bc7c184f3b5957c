"""Time the hot kernels under both backends and report the speedup.

Imports the two implementation modules directly, so the GAZEKIT_BACKEND
switch is irrelevant here. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import sys
import time

import numpy as np


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_workloads(rng):
    from gazekit import cascade
    from gazekit.data import data_path
    from gazekit.harness.synth import SynthGazeRig, render_rig_frame
    from gazekit.imgcore import GrayImage, integral_image, to_grayscale

    img = rng.uniform(0.0, 255.0, (480, 640))
    kern = rng.normal(0.0, 1.0, (5, 5))

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)

    noise = rng.random((480, 640))
    weak = noise > 0.6
    strong = noise > 0.95

    n_edges = 4000
    xs = rng.uniform(0.0, 159.0, n_edges)
    ys = rng.uniform(0.0, 119.0, n_edges)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_edges)
    ux, uy = np.cos(theta), np.sin(theta)

    frame, _ = render_rig_frame(SynthGazeRig(), (640.0, 360.0))
    gray = to_grayscale(frame)
    ii = integral_image(gray)
    sqii = integral_image(GrayImage(gray.pixels * gray.pixels))
    model = cascade.load_cascade(data_path("models/rig_face.xml"))
    win = 256
    wx, wy = np.meshgrid(
        np.arange(0, gray.width - win, 4), np.arange(0, gray.height - win, 4)
    )
    flat = cascade._flatten(model, win, win)
    nx, ny, nw, nh = flat["norm"]
    scan_args = (
        ii.table,
        sqii.table,
        wx.ravel().astype(np.int64),
        wy.ravel().astype(np.int64),
        win,
        win,
        nx,
        ny,
        nw,
        nh,
        flat["stage_starts"],
        flat["stage_thresh"],
        flat["stump_feat"],
        flat["stump_thresh"],
        flat["stump_left"],
        flat["stump_right"],
        flat["feat_starts"],
        flat["rect_x"],
        flat["rect_y"],
        flat["rect_w"],
        flat["rect_h"],
        flat["rect_weight"],
    )

    return [
        ("convolve2d 480x640 k5", lambda b: b.convolve2d(img, kern)),
        ("canny_nms 480x640", lambda b: b.canny_nms(mag, gx, gy)),
        ("hysteresis8 480x640", lambda b: b.hysteresis8(strong, weak)),
        (
            "hough 4k edges r8..32",
            lambda b: b.hough_accumulate(xs, ys, ux, uy, 8, 32, 120, 160),
        ),
        (
            f"cascade_scan {wx.size} wins",
            lambda b: b.cascade_scan(*scan_args),
        ),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="best-of repetitions")
    args = parser.parse_args(argv)

    import gazekit._kernels.pyback as pyback

    try:
        import gazekit._kernels.native as native
    except ImportError:
        print("native extension not built; nothing to compare")
        return 0

    rng = np.random.default_rng(7)
    rows = []
    for name, call in build_workloads(rng):
        t_py = best_of(lambda: call(pyback), args.repeat)
        t_nat = best_of(lambda: call(native), args.repeat)
        rows.append((name, t_py * 1e3, t_nat * 1e3, t_py / t_nat))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python ms':>10}  {'native ms':>10}  {'speedup':>8}")
    for name, py_ms, nat_ms, speedup in rows:
        print(f"{name:<{width}}  {py_ms:>10.2f}  {nat_ms:>10.2f}  {speedup:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
