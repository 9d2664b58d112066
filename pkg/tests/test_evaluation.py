import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mosaicdet.evaluation import (
    IOU_THRESHOLDS,
    Detection,
    GroundTruth,
    PRCurve,
    average_precision,
    brute_force_ap,
    evaluate,
    format_key_values,
    format_report,
    map_at,
    map_per_threshold,
    map_range,
    match_detections,
    mean_ap,
    parse_key_values,
    per_category_ap,
    pr_curve,
)
from mosaicdet.geometry import BBox

from conftest import random_pixel_box


def random_instance(rng, max_cats=5, max_dets=20, max_gts=8, images=3):
    n_cats = int(rng.integers(1, max_cats + 1))
    gts = []
    for _ in range(int(rng.integers(1, max_gts + 1))):
        gts.append(GroundTruth(f"im{rng.integers(images)}", int(rng.integers(n_cats)), random_pixel_box(rng, 64, min_side=4)))
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        if gts and rng.random() < 0.6:
            g = gts[int(rng.integers(len(gts)))]
            jitter = rng.normal(0, 3, 4)
            x1, y1, x2, y2 = np.array(g.bbox.as_tuple()) + jitter
            box = BBox(min(x1, x2), min(y1, y2), max(x1, x2) + 0.5, max(y1, y2) + 0.5)
            cat = g.category if rng.random() < 0.85 else int(rng.integers(n_cats))
            dets.append(Detection(g.image_id, cat, box, float(np.round(rng.random(), 2))))
        else:
            dets.append(Detection(f"im{rng.integers(images)}", int(rng.integers(n_cats)),
                                  random_pixel_box(rng, 64, min_side=2), float(np.round(rng.random(), 2))))
    return dets, gts


# ---------------------------------------------------------------------------
# matching


def test_exact_detections_all_tp():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10)), GroundTruth("a", 0, BBox(20, 20, 30, 30))]
    dets = [Detection("a", 0, g.bbox, 1.0) for g in gts]
    m = match_detections(dets, gts, 0.5)
    assert (m.tp, m.fp, m.fn) == (2, 0, 0)


def test_no_detections_all_fn():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10))] * 3
    m = match_detections([], gts, 0.5)
    assert (m.tp, m.fp, m.fn) == (0, 0, 3)


def test_two_detections_one_gt():
    gt = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    dets = [Detection("a", 0, BBox(1, 0, 10, 10), 0.8), Detection("a", 0, BBox(0, 0, 10, 9), 0.9)]
    m = match_detections(dets, gt, 0.5)
    assert m.det_tp == [False, True]
    assert m.gt_matched == [True]


def test_highest_iou_claim_and_ties():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10)), GroundTruth("a", 0, BBox(0, 0, 10, 10)),
           GroundTruth("a", 0, BBox(2, 0, 12, 10))]
    d = [Detection("a", 0, BBox(2, 0, 12, 10), 0.5)]
    assert match_detections(d, gts, 0.5).gt_matched == [False, False, True]
    d = [Detection("a", 0, BBox(0, 0, 10, 10), 0.5)]
    # equal IoU with two identical ground truths: the lower index wins
    assert match_detections(d, gts, 0.5).gt_matched == [True, False, False]


def test_confidence_ties_by_index():
    gt = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    dets = [Detection("a", 0, BBox(0, 0, 10, 9), 0.7), Detection("a", 0, BBox(0, 0, 10, 10), 0.7)]
    assert match_detections(dets, gt, 0.5).det_tp == [True, False]


def test_images_never_cross():
    gt = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    assert match_detections([Detection("b", 0, BBox(0, 0, 10, 10), 1.0)], gt, 0.5).tp == 0


def test_threshold_is_inclusive():
    gt = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    d = [Detection("a", 0, BBox(0, 0, 10, 5), 1.0)]
    assert match_detections(d, gt, 0.5).tp == 1


def test_categories_and_spaces_rejected():
    gt = [GroundTruth("a", 0, BBox(0, 0, 1, 1))]
    with pytest.raises(ValueError, match="one category"):
        match_detections([Detection("a", 1, BBox(0, 0, 1, 1), 1.0)], gt, 0.5)
    with pytest.raises(ValueError, match="mixed coordinate spaces"):
        match_detections([Detection("a", 0, BBox(0, 0, 1, 1), 1.0, "normalized")], gt, 0.5)


def test_cross_category_never_matches():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10)), GroundTruth("a", 1, BBox(50, 50, 60, 60))]
    dets = [Detection("a", 1, BBox(0, 0, 10, 10), 1.0)]
    assert per_category_ap(dets, gts, 0.5) == {0: 0.0, 1: 0.0}


# ---------------------------------------------------------------------------
# curves and AP


def test_pr_curve_examples():
    assert pr_curve([True] * 3, 3).points() == [(1 / 3, 1.0), (2 / 3, 1.0), (1.0, 1.0)]
    assert pr_curve([True, False], 1).points() == [(1.0, 1.0), (1.0, 0.5)]


def test_pr_curve_mixed_five():
    flags = [True, False, True, True, False]
    pts = pr_curve(flags, 4).points()
    tp = fp = 0
    for f, (r, p) in zip(flags, pts):
        tp, fp = tp + f, fp + (not f)
        assert (r, p) == (tp / 4, tp / (tp + fp))


def test_pr_curve_without_ground_truth():
    with pytest.raises(ValueError, match="no ground truth"):
        pr_curve([], 0)


def test_ap_examples():
    assert average_precision(pr_curve([True, True, False, False], 2)) == 1.0
    assert average_precision(pr_curve([False, False], 2)) == 0.0
    assert average_precision(pr_curve([], 2)) == 0.0
    # TP, FP, TP over 2 gts: 0.5 * 1 + 0.5 * 2/3
    assert average_precision(pr_curve([True, False, True], 2)) == pytest.approx(0.5 + 1 / 3, abs=1e-15)


def test_ap_interpolation_modes():
    c = pr_curve([True, False, True], 2)
    assert average_precision(c, "11pt") == pytest.approx((6 * 1 + 5 * 2 / 3) / 11, abs=1e-15)
    assert average_precision(c, "101pt") == pytest.approx((51 * 1 + 50 * 2 / 3) / 101, abs=1e-15)
    with pytest.raises(ValueError):
        average_precision(c, "bogus")


def test_random_ten_four_instance_matches_oracle():
    rng = np.random.default_rng(21)
    for _ in range(50):
        gts = [GroundTruth("a", 0, random_pixel_box(rng, 40, min_side=4)) for _ in range(4)]
        dets = []
        for _ in range(10):
            g = gts[int(rng.integers(4))].bbox
            box = g.translated(*rng.normal(0, 3, 2)) if rng.random() < 0.7 else random_pixel_box(rng, 40)
            dets.append(Detection("a", 0, box, float(rng.random())))
        assert map_at(dets, gts, 0.5) == pytest.approx(brute_force_ap(dets, gts, 0.5), abs=1e-12)


def test_mean_ap():
    assert mean_ap([1.0, 1.0]) == 1.0
    assert mean_ap([1.0, 0.0]) == 0.5
    vals = np.random.default_rng(0).random(300)
    assert mean_ap(vals) == pytest.approx(math.fsum(vals) / 300, abs=1e-12)
    with pytest.raises(ValueError, match="no evaluable categories"):
        mean_ap([])


# ---------------------------------------------------------------------------
# aggregates


def test_thresholds_grid():
    assert IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


def test_perfect_detections():
    gts = [GroundTruth("a", c, BBox(10 * c, 0, 10 * c + 8, 8)) for c in range(3)]
    dets = [Detection(g.image_id, g.category, g.bbox, 1.0) for g in gts]
    assert map_range(dets, gts) == (1.0, 1.0)


def test_constructed_iou_fixture():
    gts = [GroundTruth(f"i{k}", k % 3, BBox(0, 0, 10, 10)) for k in range(6)]
    dets = [Detection(g.image_id, g.category, BBox(0, 0, 10, 6), 0.9) for g in gts]
    map50, map5095 = map_range(dets, gts)
    assert map50 == 1.0
    assert abs(map5095 - 0.3) <= 1e-12


def test_empty_detections():
    gts = [GroundTruth("a", 0, BBox(0, 0, 1, 1))]
    assert map_range([], gts) == (0.0, 0.0)


def test_coarse_boxes_at_095():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    dets = [Detection("a", 0, BBox(0, 0, 10, 8), 0.5)]
    assert map_at(dets, gts, 0.95) == brute_force_ap(dets, gts, 0.95) == 0.0


def test_brute_force_refuses_large_instance():
    gts = [GroundTruth("a", 0, BBox(0, 0, 1, 1))]
    with pytest.raises(ValueError, match="refuses"):
        brute_force_ap([Detection("a", 0, BBox(0, 0, 1, 1), 0.5)] * 51, gts, 0.5)


def test_twenty_dets_three_categories_match_oracle():
    rng = np.random.default_rng(99)
    for _ in range(40):
        dets, gts = random_instance(rng, max_cats=3, max_dets=20, max_gts=8)
        for t in IOU_THRESHOLDS:
            assert map_at(dets, gts, t) == pytest.approx(brute_force_ap(dets, gts, t), abs=1e-12)


def test_map_monotone_in_threshold():
    rng = np.random.default_rng(5)
    for _ in range(100):
        dets, gts = random_instance(rng)
        per = map_per_threshold(dets, gts)
        assert all(a >= b - 1e-15 for a, b in zip(per, per[1:]))
        map50, map5095 = map_range(dets, gts)
        assert map50 == per[0]
        assert abs(map5095 - sum(per) / 10) <= 1e-12


def test_confidence_rescaling_invariance():
    rng = np.random.default_rng(6)
    for _ in range(60):
        dets, gts = random_instance(rng)
        # strictly increasing map on [0, 1]
        warped = [Detection(d.image_id, d.category, d.bbox, d.confidence ** 3 * 0.5 + 0.1 * d.confidence) for d in dets]
        assert map_per_threshold(dets, gts) == map_per_threshold(warped, gts)


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    for _ in range(60):
        dets, gts = random_instance(rng)
        order_d = rng.permutation(len(dets))
        order_g = rng.permutation(len(gts))
        shuffled = [dets[i] for i in order_d], [gts[i] for i in order_g]
        assert map_per_threshold(dets, gts) == map_per_threshold(*shuffled)
        r1, r2 = evaluate(dets, gts), evaluate(*shuffled)
        assert format_key_values(r1) == format_key_values(r2)


def test_duplicate_of_tp_adds_one_fp():
    from mosaicdet.geometry import iou

    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(300):
        dets, gts = random_instance(rng, max_cats=2)
        for t in (0.5, 0.75):
            for cat in sorted({g.category for g in gts}):
                cd = [d for d in dets if d.category == cat]
                cg = [g for g in gts if g.category == cat]
                m = match_detections(cd, cg, t)
                tps = [d for d, flag in zip(cd, m.det_tp) if flag]
                if not tps:
                    continue
                dup = tps[int(rng.integers(len(tps)))]
                eligible = [g for g in cg if g.image_id == dup.image_id and iou(dup.bbox, g.bbox) >= t]
                if len(eligible) != 1:
                    continue
                m2 = match_detections(cd + [dup], cg, t)
                assert (m2.tp, m2.fp) == (m.tp, m.fp + 1)
                before = per_category_ap(dets, gts, t)[cat]
                after = per_category_ap(dets + [dup], gts, t)[cat]
                assert after <= before
                checked += 1
    assert checked > 50


def test_duplicate_can_claim_a_second_overlapping_gt():
    # two near-identical ground truths: the copy is a valid match for the other one
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10)), GroundTruth("a", 0, BBox(0, 0, 10, 9))]
    det = Detection("a", 0, BBox(0, 0, 10, 10), 0.9)
    m = match_detections([det, det], gts, 0.5)
    assert (m.tp, m.fp) == (2, 0)


@given(st.lists(st.booleans(), max_size=30), st.integers(1, 10))
@settings(max_examples=200)
def test_curve_invariants(flags, extra):
    total = sum(flags) + extra - 1 if sum(flags) else extra
    c = pr_curve(flags, max(total, 1))
    assert np.all(np.diff(c.recall) >= 0)
    assert np.all((c.precision >= 0) & (c.precision <= 1))
    assert np.all((c.recall >= 0) & (c.recall <= 1))
    assert 0.0 <= average_precision(c) <= 1.0


def test_ap_equals_brute_envelope_on_all_flag_patterns():
    # every TP/FP ordering of length 6 against 4 ground truths
    for flags in itertools.product([True, False], repeat=6):
        if sum(flags) > 4:
            continue
        c = pr_curve(list(flags), 4)
        pts = c.points()
        area, prev = 0.0, 0.0
        for r in sorted({r for r, _ in pts if r > 0}):
            area += (r - prev) * max(p for rr, p in pts if rr >= r)
            prev = r
        assert average_precision(c) == pytest.approx(area, abs=1e-15)


# ---------------------------------------------------------------------------
# reports


def test_report_excludes_categories_without_gt():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10))]
    dets = [Detection("a", 0, BBox(0, 0, 10, 10), 0.9), Detection("a", 4, BBox(0, 0, 3, 3), 0.9)]
    r = evaluate(dets, gts)
    assert r.no_ground_truth == [4]
    assert r.map50 == 1.0
    text = format_report(r)
    assert "mAP 0.5  mAP 0.5:0.95" in text
    assert "excluded from mAP: 4" in text


def test_report_pr_at_cutoff():
    gts = [GroundTruth("a", 0, BBox(0, 0, 10, 10)), GroundTruth("b", 0, BBox(0, 0, 10, 10))]
    dets = [Detection("a", 0, BBox(0, 0, 10, 10), 0.9), Detection("b", 0, BBox(0, 0, 10, 10), 0.1),
            Detection("a", 0, BBox(50, 50, 60, 60), 0.8)]
    c, = evaluate(dets, gts, conf_cutoff=0.25).categories
    assert (c.tp, c.fp, c.fn) == (1, 1, 1)
    assert (c.precision, c.recall) == (0.5, 0.5)


def test_key_values_round_trip():
    rng = np.random.default_rng(3)
    dets, gts = random_instance(rng)
    r = evaluate(dets, gts)
    kv = parse_key_values(format_key_values(r))
    assert float(kv["map50"]) == r.map50
    assert float(kv["map5095"]) == r.map5095
    assert float(kv["map@0.75"]) == r.map_by_threshold[0.75]


def test_evaluate_errors():
    with pytest.raises(ValueError, match="no evaluable categories"):
        evaluate([Detection("a", 0, BBox(0, 0, 1, 1), 0.5)], [])
    with pytest.raises(ValueError):
        Detection("a", 0, BBox(0, 0, 1, 1), 1.5)


def test_empty_detection_warning():
    r = evaluate([], [GroundTruth("a", 0, BBox(0, 0, 1, 1))])
    assert (r.map50, r.map5095) == (0.0, 0.0)
    assert r.warnings == ["no detections supplied"]


def test_curve_type_points():
    c = PRCurve(np.array([0.5, 1.0]), np.array([1.0, 0.5]))
    assert c.points() == [(0.5, 1.0), (1.0, 0.5)]
