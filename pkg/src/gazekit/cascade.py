"""Boosted Haar-cascade parsing and evaluation.

Reads the new-style boosted cascade XML storage format (opencv_storage
root, stageType BOOST, featureType HAAR, stump weak classifiers, upright
features only) and scans images with a scale pyramid of window sizes:
features are scaled, the image stays fixed, so one pair of integral
images serves every scale.
"""

from __future__ import annotations

import functools
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from gazekit import _kernels
from gazekit.imgcore import GrayImage, IntegralImage, Rect, integral_image


@dataclass(frozen=True)
class HaarFeature:
    """2-3 weighted rects in base-window coordinates; upright only."""

    rects: tuple  # ((Rect, weight), ...)
    tilted: bool = False

    def __post_init__(self):
        if not (2 <= len(self.rects) <= 3):
            raise ValueError(f"feature needs 2-3 rects, got {len(self.rects)}")
        if self.tilted:
            raise ValueError("tilted features are not supported")


@dataclass(frozen=True)
class WeakClassifier:
    """Stump: emit left_val when value < threshold, else right_val."""

    feature: HaarFeature
    threshold: float
    left_val: float
    right_val: float


@dataclass(frozen=True)
class CascadeStage:
    weak: tuple
    stage_threshold: float

    def __post_init__(self):
        if len(self.weak) < 1:
            raise ValueError("stage needs at least one weak classifier")


@dataclass(frozen=True, eq=False)
class CascadeModel:
    base_width: int
    base_height: int
    stages: tuple

    def __post_init__(self):
        if self.base_width < 1 or self.base_height < 1:
            raise ValueError("base window must be positive")
        if len(self.stages) < 1:
            raise ValueError("model needs at least one stage")
        for stage in self.stages:
            for wk in stage.weak:
                for r, _ in wk.feature.rects:
                    if not r.inside(self.base_width, self.base_height):
                        raise ValueError(
                            f"feature rect {r} outside base window "
                            f"{self.base_width}x{self.base_height}"
                        )


@dataclass(frozen=True)
class Detection:
    rect: Rect
    neighbors: int
    score: float


def _text(node, tag):
    child = node.find(tag)
    if child is None or child.text is None:
        raise ValueError(f"missing <{tag}> element")
    return child.text.strip()


def parse_cascade(text: str) -> CascadeModel:
    """Materialize a CascadeModel from XML document text."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ValueError(f"malformed cascade XML: {exc}") from exc
    if root.tag != "opencv_storage":
        raise ValueError(f"expected <opencv_storage> root, got <{root.tag}>")
    casc = root.find("cascade")
    if casc is None:
        # some files name the top node after the model; accept any single
        # child that carries a stageType
        for child in root:
            if child.find("stageType") is not None:
                casc = child
                break
    if casc is None:
        raise ValueError("no cascade node found")

    stage_type = _text(casc, "stageType")
    if stage_type != "BOOST":
        raise ValueError(f"unsupported stageType {stage_type!r}")
    feature_type = _text(casc, "featureType")
    if feature_type != "HAAR":
        raise ValueError(f"unsupported featureType {feature_type!r} (HAAR only)")
    base_w = int(_text(casc, "width"))
    base_h = int(_text(casc, "height"))

    features_node = casc.find("features")
    if features_node is None:
        raise ValueError("missing <features> list")
    features = []
    for fnode in features_node.findall("_"):
        tilted_node = fnode.find("tilted")
        tilted = tilted_node is not None and tilted_node.text.strip() not in ("0", "")
        if tilted:
            raise ValueError("tilted features are not supported")
        rects_node = fnode.find("rects")
        if rects_node is None:
            raise ValueError("feature without <rects>")
        rects = []
        for rnode in rects_node.findall("_"):
            parts = rnode.text.split()
            if len(parts) != 5:
                raise ValueError(f"bad rect spec {rnode.text!r}")
            x, y, w, h = (int(p) for p in parts[:4])
            rects.append((Rect(x, y, w, h), float(parts[4])))
        balance = sum(w * r.area for r, w in rects)
        if abs(balance) > 1e-3 * base_w * base_h:
            warnings.warn(
                f"feature weights unbalanced: sum(weight*area) = {balance:g}",
                stacklevel=2,
            )
        features.append(HaarFeature(tuple(rects)))

    stages_node = casc.find("stages")
    if stages_node is None:
        raise ValueError("missing <stages> list")
    stages = []
    for snode in stages_node.findall("_"):
        st_thresh = float(_text(snode, "stageThreshold"))
        weak = []
        wc_node = snode.find("weakClassifiers")
        if wc_node is None:
            raise ValueError("stage without <weakClassifiers>")
        for wnode in wc_node.findall("_"):
            internal = _text(wnode, "internalNodes").split()
            leaves = _text(wnode, "leafValues").split()
            if len(internal) != 4 or len(leaves) != 2:
                raise ValueError(
                    "only stump weak classifiers are supported "
                    f"(got {len(internal)} internal node fields)"
                )
            left_child, right_child = int(internal[0]), int(internal[1])
            if (left_child, right_child) != (0, -1):
                raise ValueError("only stump weak classifiers are supported")
            feat_idx = int(internal[2])
            if not (0 <= feat_idx < len(features)):
                raise ValueError(f"feature index {feat_idx} out of range")
            weak.append(
                WeakClassifier(
                    features[feat_idx],
                    float(internal[3]),
                    float(leaves[0]),
                    float(leaves[1]),
                )
            )
        stages.append(CascadeStage(tuple(weak), st_thresh))

    return CascadeModel(base_w, base_h, tuple(stages))


def load_cascade(path) -> CascadeModel:
    with open(path, "r", encoding="utf-8") as f:
        return parse_cascade(f.read())


@functools.lru_cache(maxsize=128)
def _flatten(model: CascadeModel, win_w: int, win_h: int):
    """Scale the model's features to a win_w x win_h window.

    Rects are rounded to integers; the first rect's weight is recomputed so
    sum(weight * area) stays 0 after rounding. Returns the flat arrays the
    scan kernel consumes plus the scaled normalization rect.
    """
    sx = win_w / model.base_width
    sy = win_h / model.base_height

    # variance is measured over the whole window
    norm_x, norm_y, norm_w, norm_h = 0, 0, win_w, win_h

    feat_key = {}
    feats = []
    stage_starts = [0]
    stage_thresh = []
    stump_feat = []
    stump_thresh = []
    stump_left = []
    stump_right = []
    for stage in model.stages:
        for wk in stage.weak:
            if id(wk.feature) not in feat_key:
                feat_key[id(wk.feature)] = len(feats)
                feats.append(wk.feature)
            stump_feat.append(feat_key[id(wk.feature)])
            stump_thresh.append(wk.threshold)
            stump_left.append(wk.left_val)
            stump_right.append(wk.right_val)
        stage_starts.append(len(stump_feat))
        stage_thresh.append(stage.stage_threshold)

    feat_starts = [0]
    rect_x, rect_y, rect_w, rect_h, rect_weight = [], [], [], [], []
    for feature in feats:
        scaled = []
        for r, w in feature.rects:
            rx = int(round(r.x * sx))
            ry = int(round(r.y * sy))
            rw = max(1, int(round(r.w * sx)))
            rh = max(1, int(round(r.h * sy)))
            rw = min(rw, win_w - rx)
            rh = min(rh, win_h - ry)
            scaled.append([rx, ry, rw, rh, w])
        rest = sum(row[4] * row[2] * row[3] for row in scaled[1:])
        scaled[0][4] = -rest / (scaled[0][2] * scaled[0][3])
        for rx, ry, rw, rh, w in scaled:
            rect_x.append(rx)
            rect_y.append(ry)
            rect_w.append(rw)
            rect_h.append(rh)
            rect_weight.append(w)
        feat_starts.append(len(rect_x))

    as_i = lambda a: np.asarray(a, dtype=np.int64)
    as_f = lambda a: np.asarray(a, dtype=np.float64)
    return {
        "norm": (norm_x, norm_y, norm_w, norm_h),
        "stage_starts": as_i(stage_starts),
        "stage_thresh": as_f(stage_thresh),
        "stump_feat": as_i(stump_feat),
        "stump_thresh": as_f(stump_thresh),
        "stump_left": as_f(stump_left),
        "stump_right": as_f(stump_right),
        "feat_starts": as_i(feat_starts),
        "rect_x": as_i(rect_x),
        "rect_y": as_i(rect_y),
        "rect_w": as_i(rect_w),
        "rect_h": as_i(rect_h),
        "rect_weight": as_f(rect_weight),
    }


def _scan(model, ii_table, sq_table, xs, ys, win_w, win_h):
    flat = _flatten(model, win_w, win_h)
    nx, ny, nw, nh = flat["norm"]
    return _kernels.cascade_scan(
        ii_table,
        sq_table,
        xs,
        ys,
        win_w,
        win_h,
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


def evaluate_window(
    model: CascadeModel, ii: IntegralImage, sqii: IntegralImage, w: Rect
) -> bool:
    """Run every stage on one window; True only if all stages pass.

    Feature sums are variance-normalized by the window's intensity standard
    deviation times the normalization area; zero-variance windows fail.
    """
    if not w.inside(ii.width, ii.height):
        raise ValueError(f"window {w} outside {ii.width}x{ii.height} image")
    flags = _scan(
        model,
        ii.table,
        sqii.table,
        np.array([w.x], dtype=np.int64),
        np.array([w.y], dtype=np.int64),
        w.w,
        w.h,
    )
    return bool(flags[0])


def _mutual_overlap(a: Rect, b: Rect) -> bool:
    inter = a.intersection_area(b)
    return inter >= 0.5 * a.area and inter >= 0.5 * b.area


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _group_rects(rects, min_neighbors):
    """Union-find grouping by >= 50% mutual overlap; mean rect per group."""
    n = len(rects)
    if n == 0:
        return []
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if _mutual_overlap(rects[i], rects[j]):
                uf.union(i, j)
    groups = {}
    for i, r in enumerate(rects):
        groups.setdefault(uf.find(i), []).append(r)
    out = []
    for members in groups.values():
        count = len(members)
        if count < max(1, min_neighbors):
            continue
        mx = int(round(sum(r.x for r in members) / count))
        my = int(round(sum(r.y for r in members) / count))
        mw = int(round(sum(r.w for r in members) / count))
        mh = int(round(sum(r.h for r in members) / count))
        out.append(Detection(Rect(mx, my, max(1, mw), max(1, mh)), count, float(count)))

    # merging means can create fresh >= 50% mutual overlaps; fold those
    changed = True
    while changed and len(out) > 1:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if _mutual_overlap(out[i].rect, out[j].rect):
                    a, b = out[i], out[j]
                    total = a.neighbors + b.neighbors
                    merged = Detection(
                        Rect(
                            int(round((a.rect.x * a.neighbors + b.rect.x * b.neighbors) / total)),
                            int(round((a.rect.y * a.neighbors + b.rect.y * b.neighbors) / total)),
                            max(1, int(round((a.rect.w * a.neighbors + b.rect.w * b.neighbors) / total))),
                            max(1, int(round((a.rect.h * a.neighbors + b.rect.h * b.neighbors) / total))),
                        ),
                        total,
                        float(total),
                    )
                    out = [d for k, d in enumerate(out) if k not in (i, j)] + [merged]
                    changed = True
                    break
            if changed:
                break

    out.sort(key=lambda d: (-d.neighbors, d.rect.y, d.rect.x))
    return out


def detect_multiscale(
    model: CascadeModel,
    img: GrayImage,
    scale_factor: float = 1.1,
    min_neighbors: int = 3,
    min_size: int = 0,
    max_size: int = 0,
):
    """Scan a pyramid of window sizes over the image.

    Step is max(1, round(scale)) pixels. Windows narrower than min_size
    are skipped; max_size > 0 likewise caps window width, for callers
    scanning a region whose content bounds the object scale. Accepted
    windows are grouped by >= 50% mutual overlap; groups smaller than
    min_neighbors are dropped; each group contributes its mean rect.
    Sorted by neighbors descending.
    """
    if scale_factor <= 1.0:
        raise ValueError(f"scale_factor must exceed 1, got {scale_factor}")
    ii = integral_image(img)
    sqii = integral_image(GrayImage(img.pixels * img.pixels))

    hits = []
    scale = 1.0
    while True:
        win_w = int(round(model.base_width * scale))
        win_h = int(round(model.base_height * scale))
        if win_w > img.width or win_h > img.height:
            break
        if max_size > 0 and win_w > max_size:
            break
        if win_w >= min_size:
            step = max(1, int(round(scale)))
            xs = np.arange(0, img.width - win_w + 1, step, dtype=np.int64)
            ys = np.arange(0, img.height - win_h + 1, step, dtype=np.int64)
            gx, gy = np.meshgrid(xs, ys)
            gx = gx.ravel()
            gy = gy.ravel()
            flags = _scan(model, ii.table, sqii.table, gx, gy, win_w, win_h)
            for idx in np.nonzero(flags)[0]:
                hits.append(Rect(int(gx[idx]), int(gy[idx]), win_w, win_h))
        scale *= scale_factor

    return _group_rects(hits, min_neighbors)
