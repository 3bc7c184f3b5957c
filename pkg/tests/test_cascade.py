"""Cascade XML parsing, window evaluation, and multiscale detection."""

import numpy as np
import pytest
from support import rig_models, stock_cascade_path

from gazekit.cascade import (
    CascadeModel,
    Detection,
    detect_multiscale,
    evaluate_window,
    load_cascade,
    parse_cascade,
)
from gazekit.harness.synth import SynthGazeRig, render_rig_frame
from gazekit.imgcore import GrayImage, Rect, integral_image, to_grayscale

# one stage, one stump; the feature value on a 2x2 window [a b / c d]
# normalizes to ((a+c) - (b+d)) / (4*sigma)
FIXTURE_XML = """<?xml version="1.0"?>
<opencv_storage>
<cascade>
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>2</height>
  <width>2</width>
  <stages>
    <_>
      <stageThreshold>0.</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 5.0000000000000000e-01</internalNodes>
          <leafValues>-1. 1.</leafValues>
        </_>
      </weakClassifiers>
    </_>
  </stages>
  <features>
    <_>
      <rects>
        <_>0 0 2 2 -1.</_>
        <_>0 0 1 2 2.</_>
      </rects>
      <tilted>0</tilted>
    </_>
  </features>
</cascade>
</opencv_storage>
"""

# three stages over three balanced features on a 4x4 base window; gives the
# short-circuit check failures at every depth plus full passes
MULTI_XML = """<?xml version="1.0"?>
<opencv_storage>
<cascade>
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>4</height>
  <width>4</width>
  <stages>
    <_>
      <stageThreshold>0.</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.</internalNodes>
          <leafValues>-1. 1.</leafValues>
        </_>
      </weakClassifiers>
    </_>
    <_>
      <stageThreshold>0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 1 0.</internalNodes>
          <leafValues>-1. 1.</leafValues>
        </_>
        <_>
          <internalNodes>0 -1 2 1.0000000000000001e-01</internalNodes>
          <leafValues>-5.0000000000000000e-01 5.0000000000000000e-01</leafValues>
        </_>
      </weakClassifiers>
    </_>
    <_>
      <stageThreshold>4.0000000000000002e-01</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 -2.0000000000000001e-01</internalNodes>
          <leafValues>-1. 1.</leafValues>
        </_>
        <_>
          <internalNodes>0 -1 1 2.9999999999999999e-01</internalNodes>
          <leafValues>-8.0000000000000004e-01 5.9999999999999998e-01</leafValues>
        </_>
      </weakClassifiers>
    </_>
  </stages>
  <features>
    <_>
      <rects>
        <_>0 0 4 4 -1.</_>
        <_>0 0 2 4 2.</_>
      </rects>
      <tilted>0</tilted>
    </_>
    <_>
      <rects>
        <_>0 0 4 4 -1.</_>
        <_>0 0 4 2 2.</_>
      </rects>
      <tilted>0</tilted>
    </_>
    <_>
      <rects>
        <_>0 0 4 4 -1.</_>
        <_>1 1 2 2 4.</_>
      </rects>
      <tilted>0</tilted>
    </_>
  </features>
</cascade>
</opencv_storage>
"""


def window_tables(pixels):
    img = GrayImage(np.asarray(pixels, dtype=np.float64))
    ii = integral_image(img)
    sqii = integral_image(GrayImage(img.pixels * img.pixels))
    return ii, sqii


def reference_evaluate(model, ii_table, sq_table, win):
    """No-short-circuit evaluator built from the public model.

    Mirrors the evaluator's documented scaling rules (integer-rounded
    rects, first weight recomputed for zero balance, whole-window variance
    normalization) but always runs every stage.
    """
    sx = win.w / model.base_width
    sy = win.h / model.base_height

    def rsum(tab, x, y, w, h):
        return tab[y + h, x + w] - tab[y, x + w] - tab[y + h, x] + tab[y, x]

    area = float(win.w * win.h)
    s1 = rsum(ii_table, win.x, win.y, win.w, win.h)
    s2 = rsum(sq_table, win.x, win.y, win.w, win.h)
    nf2 = area * s2 - s1 * s1
    if nf2 <= 1e-9:
        return False
    inv = 1.0 / np.sqrt(nf2)
    decisions = []
    for stage in model.stages:
        votes = 0.0
        for wk in stage.weak:
            scaled = []
            for r, wgt in wk.feature.rects:
                rx = int(round(r.x * sx))
                ry = int(round(r.y * sy))
                rw = min(max(1, int(round(r.w * sx))), win.w - rx)
                rh = min(max(1, int(round(r.h * sy))), win.h - ry)
                scaled.append([rx, ry, rw, rh, wgt])
            rest = sum(row[4] * row[2] * row[3] for row in scaled[1:])
            scaled[0][4] = -rest / (scaled[0][2] * scaled[0][3])
            val = 0.0
            for rx, ry, rw, rh, wgt in scaled:
                val += wgt * rsum(ii_table, win.x + rx, win.y + ry, rw, rh)
            val *= inv
            votes += wk.left_val if val < wk.threshold else wk.right_val
        decisions.append(votes >= stage.stage_threshold)
    return all(decisions)


class TestParseCascade:
    def test_fixture_exact_fields(self):
        model = parse_cascade(FIXTURE_XML)
        assert model.base_width == 2 and model.base_height == 2
        assert len(model.stages) == 1
        stage = model.stages[0]
        assert stage.stage_threshold == 0.0
        assert len(stage.weak) == 1
        stump = stage.weak[0]
        assert stump.threshold == 0.5
        assert stump.left_val == -1.0 and stump.right_val == 1.0
        assert stump.feature.tilted is False
        assert stump.feature.rects == (
            (Rect(0, 0, 2, 2), -1.0),
            (Rect(0, 0, 1, 2), 2.0),
        )

    def test_truncated_document(self):
        with pytest.raises(ValueError):
            parse_cascade(FIXTURE_XML[: len(FIXTURE_XML) // 2])

    def test_not_xml(self):
        with pytest.raises(ValueError):
            parse_cascade("not a cascade at all")

    def test_wrong_root(self):
        with pytest.raises(ValueError):
            parse_cascade("<wrong><cascade/></wrong>")

    def test_unsupported_feature_type(self):
        with pytest.raises(ValueError):
            parse_cascade(FIXTURE_XML.replace("HAAR", "LBP"))

    def test_tilted_rejected(self):
        with pytest.raises(ValueError):
            parse_cascade(FIXTURE_XML.replace("<tilted>0<", "<tilted>1<"))

    def test_tree_classifier_rejected(self):
        bad = FIXTURE_XML.replace(
            "0 -1 0 5.0000000000000000e-01",
            "1 2 0 5.0000000000000000e-01 1.",
        )
        with pytest.raises(ValueError):
            parse_cascade(bad)

    def test_rect_outside_base_window(self):
        # still weight-balanced, so the only complaint is the bounds error
        bad = FIXTURE_XML.replace("0 0 1 2 2.", "1 0 2 2 1.")
        with pytest.raises(ValueError):
            parse_cascade(bad)

    def test_unbalanced_feature_warns(self):
        bad = FIXTURE_XML.replace("0 0 1 2 2.", "0 0 1 2 3.")
        with pytest.warns(UserWarning):
            parse_cascade(bad)

    def test_multi_stage_fixture(self):
        model = parse_cascade(MULTI_XML)
        assert len(model.stages) == 3
        assert [len(s.weak) for s in model.stages] == [1, 2, 2]

    def test_packaged_rig_models_parse(self):
        face, eye = rig_models()
        for model in (face, eye):
            assert isinstance(model, CascadeModel)
            assert len(model.stages) >= 1
            for stage in model.stages:
                for wk in stage.weak:
                    for r, _ in wk.feature.rects:
                        assert r.inside(model.base_width, model.base_height)

    @pytest.mark.skipif(
        stock_cascade_path() is None,
        reason="no stock frontal-face cascade installed "
        "(set GAZEKIT_STOCK_CASCADE to a model file)",
    )
    def test_stock_frontal_face_parses(self):
        model = load_cascade(stock_cascade_path())
        assert len(model.stages) >= 20
        for stage in model.stages:
            for wk in stage.weak:
                for r, _ in wk.feature.rects:
                    assert r.inside(model.base_width, model.base_height)


class TestEvaluateWindow:
    @pytest.fixture
    def model(self):
        return parse_cascade(FIXTURE_XML)

    # (pixels, expected): value = ((a+c)-(b+d)) / (4*sigma), accept iff > 0.5
    CASES = [
        ([[10.0, 0.0], [10.0, 0.0]], True),  # value exactly 1.0
        ([[0.0, 10.0], [0.0, 10.0]], False),  # value -1.0
        ([[5.0, 5.0], [5.0, 5.0]], False),  # zero variance
        ([[10.0, 0.0], [0.0, 0.0]], True),  # 10/sqrt(300) ~ 0.577
        ([[0.0, 0.0], [10.0, 0.0]], True),
        ([[10.0, 10.0], [0.0, 0.0]], False),  # value 0.0
        ([[20.0, 0.0], [20.0, 0.0]], True),  # gain-invariant 1.0
        ([[10.0, 2.0], [10.0, 2.0]], True),  # 16/16 = 1.0
        ([[2.0, 10.0], [2.0, 10.0]], False),
        ([[10.0, 0.0], [0.0, 10.0]], False),  # value 0.0
    ]

    def test_hand_computed_windows(self, model):
        for pixels, expected in self.CASES:
            ii, sqii = window_tables(pixels)
            got = evaluate_window(model, ii, sqii, Rect(0, 0, 2, 2))
            assert got is expected, f"window {pixels}"

    def test_uniform_window_rejected(self, model):
        ii, sqii = window_tables(np.full((6, 6), 77.0))
        assert evaluate_window(model, ii, sqii, Rect(2, 2, 2, 2)) is False

    def test_out_of_bounds_window(self, model):
        ii, sqii = window_tables(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            evaluate_window(model, ii, sqii, Rect(3, 3, 2, 2))

    def test_matches_reference_everywhere(self, rng):
        # short-circuit agreement on random content, both fixture models
        for xml, sizes in ((MULTI_XML, (4, 13)), (FIXTURE_XML, (2, 7))):
            model = parse_cascade(xml)
            px = rng.uniform(0.0, 255.0, (40, 48))
            ii, sqii = window_tables(px)
            for _ in range(75):
                side = int(rng.integers(sizes[0], sizes[1]))
                x = int(rng.integers(0, 48 - side + 1))
                y = int(rng.integers(0, 40 - side + 1))
                win = Rect(x, y, side, side)
                assert evaluate_window(model, ii, sqii, win) is bool(
                    reference_evaluate(model, ii.table, sqii.table, win)
                )


class TestDetectMultiscale:
    def test_blank_image_empty(self):
        face, _ = rig_models()
        img = GrayImage(np.full((120, 160), 128.0))
        assert detect_multiscale(face, img, min_neighbors=1) == []

    def test_image_smaller_than_min_size(self, rng):
        face, _ = rig_models()
        img = GrayImage(rng.uniform(0, 255, (60, 80)))
        assert detect_multiscale(face, img, min_neighbors=1, min_size=100) == []

    def test_image_smaller_than_base_window(self, rng):
        face, _ = rig_models()
        img = GrayImage(rng.uniform(0, 255, (12, 12)))
        assert detect_multiscale(face, img, min_neighbors=1) == []

    def test_bad_scale_factor(self):
        face, _ = rig_models()
        img = GrayImage(np.zeros((30, 30)))
        with pytest.raises(ValueError):
            detect_multiscale(face, img, scale_factor=1.0)

    def test_rig_face_found(self):
        face, _ = rig_models()
        rig = SynthGazeRig()
        frame, truth = render_rig_frame(rig, (640.0, 360.0))
        dets = detect_multiscale(
            face, to_grayscale(frame), min_neighbors=1, min_size=250, max_size=270
        )
        assert dets
        best = dets[0]
        assert isinstance(best, Detection)
        cx = best.rect.x + best.rect.w / 2.0
        cy = best.rect.y + best.rect.h / 2.0
        assert abs(cx - rig.face_center[0]) <= 15.0
        assert abs(cy - rig.face_center[1]) <= 25.0
        assert 250 <= best.rect.w <= 270

    def test_upscale_consistency(self):
        # size-s features on content C should behave like size-2s features
        # on 2x nearest-neighbor upsampled C
        face, _ = rig_models()
        frame, _ = render_rig_frame(SynthGazeRig(), (300.0, 500.0))
        g = to_grayscale(frame)
        up = GrayImage(np.repeat(np.repeat(g.pixels, 2, axis=0), 2, axis=1))
        d1 = detect_multiscale(face, g, min_neighbors=1, min_size=250, max_size=270)
        d2 = detect_multiscale(face, up, min_neighbors=1, min_size=500, max_size=540)
        assert d1 and d2
        r = d1[0].rect
        doubled = Rect(r.x * 2, r.y * 2, r.w * 2, r.h * 2)
        assert doubled.iou(d2[0].rect) >= 0.6

    def test_grouping_no_mutual_overlap(self):
        face, _ = rig_models()
        frame, _ = render_rig_frame(SynthGazeRig(), (640.0, 360.0))
        dets = detect_multiscale(
            face, to_grayscale(frame), min_neighbors=1, min_size=200, max_size=300
        )
        for i in range(len(dets)):
            for j in range(i + 1, len(dets)):
                a, b = dets[i].rect, dets[j].rect
                inter = a.intersection_area(b)
                assert not (inter >= 0.5 * a.area and inter >= 0.5 * b.area)

    def test_sorted_by_neighbors(self):
        face, _ = rig_models()
        frame, _ = render_rig_frame(SynthGazeRig(), (100.0, 100.0))
        dets = detect_multiscale(
            face, to_grayscale(frame), min_neighbors=1, min_size=200, max_size=300
        )
        counts = [d.neighbors for d in dets]
        assert counts == sorted(counts, reverse=True)
