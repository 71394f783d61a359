"""Tests for detection metrics: IoU, matching, PR curves, AP, mAP, file I/O.

`ap_oracle` below is a deliberately naive 101-point interpolation written
straight from the definition (for each recall level t in {0, 0.01, ..., 1},
take the best precision among curve points whose recall reaches t, average
the 101 samples). It shares no code with the library and is the reference
the fast implementation must match exactly.
"""

import numpy as np
import pytest

from fastblocks.errors import DegenerateInputError, ParseError, ValidationError
from fastblocks.metrics import (
    RANGE_THRESHOLDS,
    BBox,
    Detection,
    GroundTruth,
    average_precision,
    evaluate,
    iou,
    load_detections,
    load_ground_truths,
    match_detections,
    parse_detection_lines,
    parse_ground_truth_lines,
    pr_curve,
)


def ap_oracle(labels, total_gt):
    """Brute-force 101-point interpolated AP from TP/FP labels."""
    points = []
    tp = 0
    for k, is_tp in enumerate(labels, start=1):
        tp += bool(is_tp)
        points.append((tp / k, tp / total_gt if total_gt > 0 else 0.0))
    total = 0.0
    for i in range(101):
        t = i / 100
        best = 0.0
        for p, r in points:
            if r >= t and p > best:
                best = p
        total += best
    return total / 101


def det(image, conf, box, category=0):
    return Detection(image, category, BBox(*box), conf)


def gt(image, box, category=0):
    return GroundTruth(image, category, BBox(*box))


UNIT = (0.0, 0.0, 1.0, 1.0)


# ---------------------------------------------------------------- iou


class TestIoU:
    def test_identical_boxes(self):
        assert iou(BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BBox(0, 0, 1, 1), BBox(2, 2, 3, 3)) == 0.0

    def test_touching_edges_count_as_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(1, 0, 2, 1)) == 0.0

    def test_hand_geometry(self):
        # intersection 1, union 4 + 4 - 1
        assert abs(iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) - 1.0 / 7.0) < 1e-12

    def test_symmetric_bounded_translation_invariant(self):
        def rand_box(rng):
            x1, x2 = np.sort(rng.uniform(0.0, 10.0, 2))
            y1, y2 = np.sort(rng.uniform(0.0, 10.0, 2))
            return BBox(float(x1), float(y1), float(x2) + 1e-3, float(y2) + 1e-3)

        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = rand_box(rng), rand_box(rng)
            v = iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == iou(b, a)
            dx, dy = rng.uniform(-5, 5, 2)
            a2 = BBox(a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy)
            b2 = BBox(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)
            assert abs(iou(a2, b2) - v) < 1e-9

    def test_box_validation(self):
        with pytest.raises(ValidationError):
            BBox(0, 0, 0, 1)  # zero width
        with pytest.raises(ValidationError):
            BBox(0, 0, 1, -1)
        with pytest.raises(ValidationError):
            BBox(0, 0, np.inf, 1)

    def test_confidence_validation(self):
        with pytest.raises(ValidationError):
            Detection("i", 0, BBox(*UNIT), 1.5)


# ---------------------------------------------------------------- matching


class TestMatching:
    def test_exact_detections_all_tp(self):
        gts = [gt("a", UNIT), gt("a", (5, 5, 6, 6))]
        dets = [det("a", 0.9, UNIT), det("a", 0.8, (5, 5, 6, 6))]
        labels, fn = match_detections(dets, gts, 0.5)
        assert labels == [True, True]
        assert fn == 0

    def test_no_detections_all_fn(self):
        labels, fn = match_detections([], [gt("a", UNIT), gt("b", UNIT)], 0.5)
        assert labels == []
        assert fn == 2

    def test_one_gt_two_overlapping_detections(self):
        gts = [gt("a", UNIT)]
        dets = [det("a", 0.9, UNIT), det("a", 0.8, UNIT)]
        labels, fn = match_detections(dets, gts, 0.5)
        assert labels == [True, False]
        assert fn == 0

    def test_labels_in_descending_confidence_order(self):
        gts = [gt("a", UNIT)]
        dets = [det("a", 0.3, UNIT), det("a", 0.9, (3, 3, 4, 4))]
        # highest confidence first: the off-target 0.9 det is FP, the 0.3 is TP
        labels, _ = match_detections(dets, gts, 0.5)
        assert labels == [False, True]

    def test_confidence_ties_keep_input_order(self):
        gts = [gt("a", UNIT)]
        dets = [det("a", 0.5, UNIT), det("a", 0.5, UNIT)]
        labels, _ = match_detections(dets, gts, 0.5)
        assert labels == [True, False]

    def test_iou_tie_takes_lowest_gt_index(self):
        # det0 overlaps gt0 and gt1 with identical IoU 0.6; the tie must go
        # to gt0, leaving gt0 taken when det1 (exactly gt0's box) arrives
        gts = [gt("a", (0, 0, 2, 2)), gt("a", (1, 0, 3, 2))]
        dets = [det("a", 0.9, (0.5, 0, 2.5, 2)), det("a", 0.8, (0, 0, 2, 2))]
        labels, fn = match_detections(dets, gts, 0.5)
        assert labels == [True, False]
        assert fn == 1

    def test_matching_is_per_image(self):
        gts = [gt("a", UNIT)]
        dets = [det("b", 0.9, UNIT)]  # same box, wrong image
        labels, fn = match_detections(dets, gts, 0.5)
        assert labels == [False]
        assert fn == 1

    def test_each_gt_claimed_once(self):
        gts = [gt("a", UNIT)]
        dets = [det("a", 0.9, UNIT), det("a", 0.8, UNIT), det("a", 0.7, UNIT)]
        labels, _ = match_detections(dets, gts, 0.5)
        assert labels == [True, False, False]

    def test_threshold_validated(self):
        with pytest.raises(ValidationError):
            match_detections([], [], 0.0)
        with pytest.raises(ValidationError):
            match_detections([], [], 1.1)

    def test_lower_threshold_never_loses_tps(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            gts = [
                gt("a", (x, y, x + rng.uniform(0.5, 2), y + rng.uniform(0.5, 2)))
                for x, y in rng.uniform(0, 6, (int(rng.integers(1, 5)), 2))
            ]
            dets = [
                det("a", float(rng.uniform(0.1, 1.0)), (x, y, x + rng.uniform(0.5, 2), y + rng.uniform(0.5, 2)))
                for x, y in rng.uniform(0, 6, (int(rng.integers(0, 7)), 2))
            ]
            tp_strict = sum(match_detections(dets, gts, 0.75)[0])
            tp_loose = sum(match_detections(dets, gts, 0.5)[0])
            assert tp_loose >= tp_strict


# ---------------------------------------------------------------- pr curve


class TestPrCurve:
    def test_nine_hits_one_miss(self):
        labels = [True] * 9 + [False]
        curve = pr_curve(labels, total_gt=10)
        p, r = curve[-1]
        assert p == 0.9 and r == 0.9

    def test_two_perfect_hits(self):
        assert pr_curve([True, True], 2) == [(1.0, 0.5), (1.0, 1.0)]

    def test_miss_then_hit(self):
        assert pr_curve([False, True], 1) == [(0.0, 0.0), (0.5, 1.0)]

    def test_no_gt_pins_recall_to_zero(self):
        curve = pr_curve([False, False], 0)
        assert all(r == 0.0 for _, r in curve)

    def test_negative_gt_rejected(self):
        with pytest.raises(ValidationError):
            pr_curve([], -1)


# ---------------------------------------------------------------- average precision


class TestAveragePrecision:
    def test_empty_curve_is_zero(self):
        assert average_precision([]) == 0.0

    def test_perfect_detector(self):
        assert average_precision(pr_curve([True, True, True], 3)) == 1.0

    def test_all_false_positives(self):
        assert average_precision(pr_curve([False, False], 2)) == 0.0

    def test_hit_miss_hit_matches_closed_form(self):
        curve = pr_curve([True, False, True], 2)
        expect = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101
        got = average_precision(curve)
        assert abs(got - expect) < 1e-12
        assert got == ap_oracle([True, False, True], 2)

    def test_decreasing_recall_rejected(self):
        with pytest.raises(ValidationError):
            average_precision([(1.0, 0.5), (1.0, 0.4)])

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(0, 9))
            labels = [bool(b) for b in rng.random(n) < 0.5]
            total_gt = sum(labels) + int(rng.integers(0, 4))
            got = average_precision(pr_curve(labels, total_gt))
            assert got == ap_oracle(labels, total_gt)

    def test_result_always_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 10))
            labels = [bool(b) for b in rng.random(n) < 0.6]
            total_gt = max(1, sum(labels) + int(rng.integers(0, 4)))
            ap = average_precision(pr_curve(labels, total_gt))
            assert 0.0 <= ap <= 1.0


# ---------------------------------------------------------------- evaluate


class TestEvaluate:
    def test_perfect_detections(self):
        gts = [gt("a", UNIT), gt("b", (2, 2, 4, 4), category=1)]
        dets = [det("a", 1.0, UNIT), det("b", 1.0, (2, 2, 4, 4), category=1)]
        result = evaluate(dets, gts, RANGE_THRESHOLDS)
        assert result.map50 == 1.0
        assert result.map5095 == 1.0
        assert result.dataset_precision == 1.0
        assert result.dataset_recall == 1.0
        assert not result.no_detections

    def test_single_category_map_is_its_ap(self):
        gts = [gt("a", UNIT), gt("a", (5, 5, 6, 6))]
        dets = [det("a", 0.9, UNIT), det("a", 0.8, (8, 8, 9, 9))]
        result = evaluate(dets, gts, (0.5,))
        assert result.map50 == result.per_category_ap[0][0.5]

    def test_two_categories_average(self):
        # category 0 perfect (AP 1.0); category 1 one hit one miss of 2 gts
        gts = [gt("a", UNIT), gt("a", (3, 3, 4, 4), category=1), gt("a", (6, 6, 7, 7), category=1)]
        dets = [
            det("a", 1.0, UNIT),
            det("a", 0.9, (3, 3, 4, 4), category=1),
        ]
        result = evaluate(dets, gts, (0.5,))
        assert result.per_category_ap[0][0.5] == 1.0
        ap1 = result.per_category_ap[1][0.5]
        assert abs(ap1 - 0.5) < 0.01  # 1 of 2 found at full precision
        assert abs(result.map50 - (1.0 + ap1) / 2.0) < 1e-12

    def test_dataset_precision_recall_pooled(self):
        gts = [gt("a", (float(i), 0.0, float(i) + 0.9, 1.0)) for i in range(10)]
        dets = [det("a", 1.0 - 0.01 * i, (float(i), 0.0, float(i) + 0.9, 1.0)) for i in range(9)]
        dets.append(det("a", 0.5, (50.0, 50.0, 51.0, 51.0)))
        result = evaluate(dets, gts, (0.5,))
        # TP=9, FP=1, FN=1
        assert result.dataset_precision == 0.9
        assert result.dataset_recall == 0.9

    def test_no_ground_truth_rejected(self):
        with pytest.raises(DegenerateInputError):
            evaluate([det("a", 0.9, UNIT)], [], (0.5,))

    def test_empty_thresholds_rejected(self):
        with pytest.raises(ValidationError):
            evaluate([], [gt("a", UNIT)], ())
        with pytest.raises(ValidationError):
            evaluate([], [gt("a", UNIT)], (0.0,))

    def test_no_detections_flagged_not_fatal(self):
        result = evaluate([], [gt("a", UNIT)], (0.5,))
        assert result.no_detections
        assert result.map50 == 0.0
        assert result.dataset_precision == 0.0
        assert result.dataset_recall == 0.0

    def test_detection_order_irrelevant_with_distinct_confidences(self):
        rng = np.random.default_rng(4)
        gts = [gt("a", (float(i), 0.0, i + 1.0, 1.0)) for i in range(4)]
        dets = [
            det("a", 0.9, (0.1, 0.0, 1.0, 1.0)),
            det("a", 0.7, (1.2, 0.0, 2.0, 1.0)),
            det("a", 0.5, (7.0, 7.0, 8.0, 8.0)),
            det("a", 0.3, (2.1, 0.0, 3.0, 1.0)),
        ]
        baseline = evaluate(dets, gts, RANGE_THRESHOLDS)
        for _ in range(5):
            shuffled = [dets[i] for i in rng.permutation(len(dets))]
            result = evaluate(shuffled, gts, RANGE_THRESHOLDS)
            assert result.map50 == baseline.map50
            assert result.map5095 == baseline.map5095

    def test_duplicate_detection_never_raises_ap(self):
        gts = [gt("a", UNIT), gt("a", (3, 3, 4, 4))]
        dets = [det("a", 0.9, UNIT), det("a", 0.8, (3, 3, 4, 4))]
        before = evaluate(dets, gts, (0.5,)).map50
        after = evaluate(dets + [det("a", 0.7, UNIT)], gts, (0.5,)).map50
        assert after <= before

    def test_range_thresholds_constant(self):
        assert len(RANGE_THRESHOLDS) == 10
        assert RANGE_THRESHOLDS[0] == 0.50
        assert abs(RANGE_THRESHOLDS[-1] - 0.95) < 1e-12
        assert np.allclose(np.diff(RANGE_THRESHOLDS), 0.05)

    def test_map5095_is_mean_over_thresholds(self):
        gts = [gt("a", UNIT)]
        dets = [det("a", 0.9, (0.0, 0.0, 1.0, 0.8))]  # IoU 0.8
        result = evaluate(dets, gts, RANGE_THRESHOLDS)
        aps = [result.per_category_ap[0][t] for t in RANGE_THRESHOLDS]
        assert abs(result.map5095 - sum(aps) / 10) < 1e-12
        # IoU 0.8 passes thresholds up to 0.80 only
        assert result.per_category_ap[0][0.5] == 1.0
        assert result.per_category_ap[0][RANGE_THRESHOLDS[-1]] == 0.0


# ---------------------------------------------------------------- files


GT_TEXT = """# image  category  box
a 0 0 0 10 10
a 1 5 5 8 8
b 0 1 1 2 2
"""

DET_TEXT = """a 0 0 0 10 10 0.95
a 1 5 5 8 8 0.90
b 0 1 1 2 2 0.80
"""


class TestFiles:
    def test_parse_ground_truth(self):
        gts = parse_ground_truth_lines(GT_TEXT)
        assert len(gts) == 3
        assert gts[0] == GroundTruth("a", 0, BBox(0, 0, 10, 10))

    def test_parse_detections(self):
        dets = parse_detection_lines(DET_TEXT)
        assert len(dets) == 3
        assert dets[0].confidence == 0.95

    @pytest.mark.parametrize(
        "line, fragment",
        [
            ("a 0 0 0 10", "6 fields"),
            ("a x 0 0 10 10", "integer"),
            ("a 0 0 0 ten 10", "numbers"),
            ("a 0 5 5 1 1", "positive area"),
        ],
    )
    def test_malformed_gt_lines(self, line, fragment):
        with pytest.raises(ParseError) as err:
            parse_ground_truth_lines("a 0 0 0 10 10\n" + line + "\n")
        assert err.value.line == 2
        assert fragment in str(err.value)

    def test_malformed_detection_lines(self):
        with pytest.raises(ParseError, match="7 fields"):
            parse_detection_lines("a 0 0 0 10 10\n")
        with pytest.raises(ParseError, match="confidence"):
            parse_detection_lines("a 0 0 0 10 10 high\n")
        with pytest.raises(ParseError, match="line 1"):
            parse_detection_lines("a 0 0 0 10 10 1.5\n")

    def test_load_round_trip(self, tmp_path):
        gt_path = tmp_path / "gt.txt"
        det_path = tmp_path / "det.txt"
        gt_path.write_text(GT_TEXT)
        det_path.write_text(DET_TEXT)
        gts = load_ground_truths(gt_path)
        dets = load_detections(det_path)
        result = evaluate(dets, gts, (0.5,))
        assert result.map50 == 1.0
