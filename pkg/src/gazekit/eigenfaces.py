"""PCA face templating and matching.

Experimental module: with tiny training sets the reconstruction error
separates same-person re-shots from noise, but generalization across
pose/expression is poor; kept behind an explicit API so callers choose
their own match threshold.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from gazekit.imgcore import GrayImage, resize_gray

NORMALIZED_SIZE = (64, 64)  # (w, h)
MAX_COMPONENTS = 16
_MAGIC = b"EIGF"


@dataclass(frozen=True)
class FaceTemplate:
    size: tuple  # (w, h)
    mean_face: np.ndarray  # (w*h,)
    basis: np.ndarray  # (w*h, k), orthonormal columns

    def __post_init__(self):
        w, h = self.size
        if self.mean_face.shape != (w * h,):
            raise ValueError("mean_face length does not match size")
        if self.basis.ndim != 2 or self.basis.shape[0] != w * h:
            raise ValueError("basis rows do not match size")
        gram = self.basis.T @ self.basis
        if np.abs(gram - np.eye(self.k)).max() > 1e-6:
            raise ValueError("basis columns are not orthonormal")

    @property
    def k(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class MatchResult:
    weights: np.ndarray
    reconstruction_error: float

    def __post_init__(self):
        if self.reconstruction_error < 0:
            raise ValueError("error must be non-negative")


def equalize_histogram(img: GrayImage) -> GrayImage:
    """Classic 256-bin histogram equalization; blunts illumination shifts."""
    values = np.clip(np.rint(img.pixels), 0, 255).astype(np.int64)
    hist = np.bincount(values.ravel(), minlength=256)
    cdf = hist.cumsum()
    nonzero = cdf[cdf > 0]
    if nonzero.size == 0:
        return GrayImage(np.zeros_like(img.pixels))
    cdf_min = nonzero[0]
    total = cdf[-1]
    if total == cdf_min:
        # single-intensity image: equalization is undefined, map to mid-gray
        return GrayImage(np.full_like(img.pixels, 127.0))
    lut = (cdf - cdf_min) / (total - cdf_min) * 255.0
    return GrayImage(lut[values])


def preprocess(img: GrayImage, size=NORMALIZED_SIZE) -> np.ndarray:
    """Resample to the normalized resolution, equalize, flatten to a vector."""
    w, h = size
    return equalize_histogram(resize_gray(img, w, h)).pixels.ravel()


def build_template(faces, size=NORMALIZED_SIZE, max_k=MAX_COMPONENTS) -> FaceTemplate:
    """PCA basis from >= 2 faces via the n x n Gram-matrix trick.

    Keeps k = min(n-1, max_k) components (fewer if the data is rank
    deficient); identical inputs have zero covariance and are rejected.
    """
    if len(faces) < 2:
        raise ValueError(f"need at least 2 faces, got {len(faces)}")
    vectors = np.stack([preprocess(f, size) for f in faces])
    mean = vectors.mean(axis=0)
    centered = vectors - mean
    gram = centered @ centered.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    scale = float(evals[0]) if evals.size else 0.0
    if scale <= 1e-12:
        raise ValueError("zero covariance: training images are identical")
    keep = min(len(faces) - 1, max_k)
    usable = int((evals > 1e-10 * scale).sum())
    keep = min(keep, usable)
    basis = centered.T @ evecs[:, :keep]
    basis /= np.sqrt(evals[:keep])
    # re-orthonormalize against floating-point drift
    q, _ = np.linalg.qr(basis)
    return FaceTemplate((size[0], size[1]), mean, q)


def match_face(template: FaceTemplate, img: GrayImage) -> MatchResult:
    """Project into face space; the residual norm is the match error."""
    x = preprocess(img, template.size)
    centered = x - template.mean_face
    weights = template.basis.T @ centered
    residual = centered - template.basis @ weights
    return MatchResult(weights, float(np.linalg.norm(residual)))


def save_template(path, template: FaceTemplate, n_train: int = 0) -> None:
    """Little-endian binary: "EIGF", u32 w, h, k, n, f64 mean, f64 basis."""
    w, h = template.size
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", w, h, template.k, n_train))
        f.write(template.mean_face.astype("<f8").tobytes())
        f.write(np.ascontiguousarray(template.basis).astype("<f8").tobytes())


def load_template(path) -> FaceTemplate:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        w, h, k, _n = struct.unpack("<IIII", f.read(16))
        mean = np.frombuffer(f.read(8 * w * h), dtype="<f8").copy()
        basis = np.frombuffer(f.read(8 * w * h * k), dtype="<f8").copy()
    return FaceTemplate((w, h), mean, basis.reshape(w * h, k))
