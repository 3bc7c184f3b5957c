"""gazekit: classical gaze estimation from monocular webcam frames.

Layered from the bottom up: imgcore (pixels), skinmodel / cascade
(face and eye localization), pupil (center fitting), eigenfaces
(identity plumbing), gaze (calibration and screen mapping), harness
(CLI, synthetic rig, fixtures, streaming service).
"""

from gazekit._kernels import BACKEND as backend_name

__version__ = "0.1.0"

__all__ = ["__version__", "backend_name"]
