import csv
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarincrust.core import BBox
from sarincrust.errors import EvaluationError, ValidationError
from sarincrust.metrics import (GroundTruth, Prediction, ap_sweep, average_precision,
                                default_iou_thresholds, distractor_ap, iou, match, pr_curve,
                                read_predictions, write_ap_sweep_csv, write_pr_curve_csv,
                                write_predictions)

from oracles import boxes, instances, reference_ap, to_objects


def P(box, conf, scene="s"):
    return Prediction(scene, BBox(*box), conf)


def G(box, scene="s"):
    return GroundTruth(scene, BBox(*box))


@settings(max_examples=200, deadline=None, derandomize=True)
@given(instances())
def test_ap_matches_brute_force(inst):
    preds, gts, t = inst
    p, g = to_objects(preds, gts)
    assert abs(average_precision(pr_curve(p, g, t)) - reference_ap(preds, gts, t)) <= 1e-9


def test_ap_oracle_200_instances_fast():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    for _ in range(200):
        def box():
            x, y = rng.integers(0, 12, 2)
            w, h = rng.integers(1, 8, 2)
            return (int(x), int(y), int(x + w), int(y + h))
        gts = [(box(), "a") for _ in range(rng.integers(1, 5))]
        preds = [(box(), float(rng.choice([0.2, 0.5, 0.8, 1.0])), "a")
                 for _ in range(rng.integers(0, 7))]
        p, g = to_objects(preds, gts)
        assert abs(average_precision(pr_curve(p, g, 0.3)) - reference_ap(preds, gts, 0.3)) <= 1e-9
    assert time.perf_counter() - start < 5


# -- IoU ---------------------------------------------------------------------

def test_iou_examples():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(20, 20, 30, 30)) == 0.0
    assert iou(a, BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)
    assert iou(a, BBox(10, 0, 20, 10)) == 0.0


@settings(max_examples=100, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    ba, bb = BBox(*a), BBox(*b)
    assert iou(ba, bb) == iou(bb, ba)
    assert 0.0 <= iou(ba, bb) <= 1.0
    assert iou(ba, ba) == 1.0


# -- matching ----------------------------------------------------------------

def test_match_exact():
    out = match([P((0, 0, 10, 10), 0.9)], [G((0, 0, 10, 10))], 0.5)
    assert (out.tp, out.fp, out.fn) == (1, 0, 0)


def test_match_greedy_by_confidence():
    gt = G((0, 0, 10, 10))
    hi = P((0, 0, 6, 10), 0.9)        # IoU 0.6
    lo = P((0, 0, 7, 10), 0.8)        # IoU 0.7
    out = match([lo, hi], [gt], 0.5)
    assert (out.tp, out.fp, out.fn) == (1, 1, 0)
    assert out.pairs[0][0] is hi
    assert out.pairs[0][2] == pytest.approx(0.6)


def test_match_no_predictions():
    out = match([], [G((0, 0, 2, 2)), G((3, 3, 5, 5)), G((6, 6, 8, 8))], 0.5)
    assert (out.tp, out.fp, out.fn) == (0, 0, 3)


def test_match_is_per_scene():
    out = match([P((0, 0, 10, 10), 0.9, "b")], [G((0, 0, 10, 10), "a")], 0.5)
    assert (out.tp, out.fp, out.fn) == (0, 1, 1)


def test_ties_broken_by_input_order():
    gt = G((0, 0, 10, 10))
    first = P((0, 0, 6, 10), 0.5)
    second = P((0, 0, 10, 10), 0.5)
    out = match([first, second], [gt], 0.5)
    assert out.pairs[0][0] is first


@settings(max_examples=100, deadline=None)
@given(instances())
def test_count_identities(inst):
    preds, gts, t = inst
    p, g = to_objects(preds, gts)
    out = match(p, g, t)
    assert out.tp + out.fn == len(g)
    assert out.tp + out.fp == len(p)


# -- curves and AP -----------------------------------------------------------

def three_pred_case():
    gts = [G((0, 0, 10, 10)), G((20, 20, 30, 30))]
    preds = [P((0, 0, 10, 10), 0.9), P((50, 50, 60, 60), 0.8), P((20, 20, 30, 30), 0.7)]
    return preds, gts


def test_three_prediction_curve():
    preds, gts = three_pred_case()
    curve = pr_curve(preds, gts, 0.5)
    got = [(p.threshold, p.precision, p.recall) for p in curve.points]
    assert got == [(0.9, 1.0, 0.5), (0.8, 0.5, 0.5), (0.7, pytest.approx(2 / 3), 1.0)]
    assert average_precision(curve) == pytest.approx(5 / 6, abs=1e-12)


def test_perfect_detector():
    preds, gts = three_pred_case()
    curve = pr_curve([preds[0], preds[2]], gts, 0.5)
    assert curve.points[-1].precision == 1.0 and curve.points[-1].recall == 1.0
    assert average_precision(curve) == 1.0


def test_no_true_positives():
    curve = pr_curve([P((50, 50, 60, 60), 0.9), P((70, 70, 80, 80), 0.4)], [G((0, 0, 5, 5))], 0.5)
    assert all(p.precision == 0 for p in curve.points)
    assert average_precision(curve) == 0.0


def test_empty_predictions_and_missing_gt():
    curve = pr_curve([], [G((0, 0, 5, 5))], 0.5)
    assert [(p.precision, p.recall) for p in curve.points] == [(1.0, 0.0)]
    assert average_precision(curve) == 0.0
    with pytest.raises(EvaluationError):
        pr_curve([P((0, 0, 1, 1), 0.5)], [], 0.5)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_curve_invariants(inst):
    preds, gts, t = inst
    p, g = to_objects(preds, gts)
    pts = pr_curve(p, g, t).points
    thr = [x.threshold for x in pts]
    rec = [x.recall for x in pts]
    assert thr == sorted(thr, reverse=True) and len(set(thr)) == len(thr)
    assert rec == sorted(rec)
    assert all(0 <= x.precision <= 1 and 0 <= x.recall <= 1 for x in pts)


@settings(max_examples=100, deadline=None)
@given(instances(), st.sampled_from([1.0, 0.5, 0.25, 0.125]))
def test_confidence_scaling_invariance(inst, k):
    preds, gts, t = inst
    p, g = to_objects(preds, gts)
    scaled = [Prediction(x.scene_id, x.bbox, x.confidence * k) for x in p]
    assert average_precision(pr_curve(scaled, g, t)) == average_precision(pr_curve(p, g, t))


# -- sweep and distractor mode -----------------------------------------------

def test_default_thresholds():
    ts = default_iou_thresholds()
    assert len(ts) == 19 and ts[0] == 0.05 and ts[-1] == 0.95 and 0.4 in ts


def test_sweep_perfect():
    gts = [G((i * 20, 0, i * 20 + 10, 10)) for i in range(4)]
    preds = [P((g.bbox.x_min, 0, g.bbox.x_max, 10), 1.0) for g in gts]
    assert all(ap == 1.0 for _, ap in ap_sweep(preds, gts))


def test_sweep_at_iou_point_four():
    gts = [G((i * 20, 0, i * 20 + 10, 10), f"s{i}") for i in range(5)]
    preds = [P((i * 20, 0, i * 20 + 4, 10), 0.9 - 0.1 * i, f"s{i}") for i in range(5)]
    assert all(iou(p.bbox, g.bbox) == 0.4 for p, g in zip(preds, gts))
    for t, ap in ap_sweep(preds, gts):
        assert ap == (1.0 if t <= 0.4 else 0.0)


def test_sweep_rejects_bad_threshold():
    with pytest.raises(EvaluationError):
        ap_sweep([], [G((0, 0, 1, 1))], [0.0])


def test_distractor_ap_examples():
    d = [G((i * 20, 0, i * 20 + 10, 10)) for i in range(10)]
    assert distractor_ap([], d, 0.5) == 0.0
    assert distractor_ap([P((200, 200, 210, 210), 0.9)], d, 0.5) == 0.0
    every = [P((g.bbox.x_min, 0, g.bbox.x_max, 10), 0.95) for g in d]
    assert distractor_ap(every, d, 0.5) == 1.0
    one = [P((0, 0, 10, 10), 0.99)]
    assert distractor_ap(one, d, 0.5) == pytest.approx(0.1)
    with pytest.raises(EvaluationError):
        distractor_ap(one, [], 0.5)


# -- I/O ---------------------------------------------------------------------

def test_prediction_validation():
    with pytest.raises(ValidationError):
        P((0, 0, 1, 1), 1.5)


def test_predictions_round_trip(tmp_path):
    preds = [P((0, 0, 4, 5), 0.25, "000001"), P((3, 1, 9, 9), 1.0, "000002")]
    write_predictions(preds, tmp_path / "p.jsonl")
    assert read_predictions(tmp_path / "p.jsonl") == preds


def test_csv_outputs(tmp_path):
    preds, gts = three_pred_case()
    write_pr_curve_csv(pr_curve(preds, gts, 0.5), tmp_path / "pr.csv")
    rows = list(csv.reader(open(tmp_path / "pr.csv")))
    assert rows[0] == ["threshold", "precision", "recall"]
    assert rows[1] == ["0.9", "1.0", "0.5"]
    write_ap_sweep_csv(ap_sweep(preds, gts), tmp_path / "sweep.csv")
    rows = list(csv.reader(open(tmp_path / "sweep.csv")))
    assert rows[0] == ["iou_threshold", "ap"] and len(rows) == 20
    assert rows[8][0] == "0.4"
