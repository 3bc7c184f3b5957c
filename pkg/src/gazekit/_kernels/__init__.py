"""Kernel backend selection.

Prefers the compiled extension when it was built; falls back to the NumPy
implementations otherwise. GAZEKIT_BACKEND=python|native forces a choice
(forcing "native" raises if the extension is missing).
"""

import os

_forced = os.environ.get("GAZEKIT_BACKEND", "").strip().lower()

if _forced == "python":
    from gazekit._kernels import pyback as _impl
elif _forced == "native":
    from gazekit._kernels import native as _impl  # type: ignore[no-redef]
else:
    try:
        from gazekit._kernels import native as _impl  # type: ignore[no-redef]
    except ImportError:
        from gazekit._kernels import pyback as _impl

BACKEND = _impl.BACKEND
convolve2d = _impl.convolve2d
canny_nms = _impl.canny_nms
hysteresis8 = _impl.hysteresis8
hough_accumulate = _impl.hough_accumulate
cascade_scan = _impl.cascade_scan
